//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel loop in the crate writes each output element from exactly
//! one task and never reduces across tasks, so results are bit-identical
//! between [`Execution::Sequential`] and [`Execution::Parallel`]. Without the
//! `parallel` feature the parallel variant falls back to the sequential loop.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum number of items handed to a single rayon task.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `true` when this policy will actually fan out over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Fill `out[i] = f(i)`.
pub fn fill_indexed<F>(exec: Execution, out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        out.par_iter_mut()
            .with_min_len(MIN_CHUNK)
            .enumerate()
            .for_each(|(i, o)| *o = f(i));
        return;
    }
    let _ = exec;
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Map `f` over `0..n` and collect in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().with_min_len(1).map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Map `f` over `0..n` on a dedicated pool of `workers` threads, collecting
/// in index order. Sequential when `workers <= 1` or without the `parallel`
/// feature.
pub fn map_on_workers<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>, String>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| e.to_string())?;
        return Ok(pool.install(|| (0..n).into_par_iter().with_min_len(1).map(&f).collect()));
    }
    let _ = workers;
    Ok((0..n).map(f).collect())
}

/// Dot product with a fixed four-lane accumulation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = 4 * c;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}
