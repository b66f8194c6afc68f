//! Symmetric linear operators used for `AᵀA`, graph Laplacians and
//! preconditioning metrics.

use std::fmt;
use std::sync::{Arc, OnceLock};

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, DcError, Result};
use crate::parallel::{dot, fill_indexed, Execution};

/// Safety factor applied to power-iteration estimates of the largest eigenvalue.
pub const EIGEN_SAFETY: f64 = 1.01;

const POWER_MAX_ITER: usize = 100;
const POWER_RTOL: f64 = 1e-10;

/// Square matrix in compressed sparse row form. Column indices are sorted
/// within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row `(column, value)` lists. Duplicate columns within a
    /// row are summed.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        check_dim(n, rows.len())?;
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if j >= n {
                    return Err(DcError::InvalidParameter(format!(
                        "column index {j} out of range for dimension {n}"
                    )));
                }
                if last == Some(j) {
                    *values.last_mut().expect("entry pushed for this column") += v;
                } else {
                    indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            n,
            indptr,
            indices,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        let mut s = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            s += v * x[j];
        }
        s
    }

    pub fn matvec_into(&self, exec: Execution, x: &[f64], out: &mut [f64]) {
        fill_indexed(exec, out, |i| self.row_dot(i, x));
    }
}

/// `AᵀA` for a dense rectangular `A`, applied as two matrix-vector products.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    a: Array2<f64>,
    at: Array2<f64>,
}

impl GramMatrix {
    pub fn new(a: Array2<f64>) -> Self {
        let a = a.as_standard_layout().into_owned();
        let at = a.t().as_standard_layout().into_owned();
        Self { a, at }
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// `A x` (length = rows).
    pub fn forward_into(&self, exec: Execution, x: &[f64], out: &mut [f64]) {
        dense_matvec(exec, &self.a, x, out);
    }

    /// `Aᵀ r` (length = cols).
    pub fn adjoint_into(&self, exec: Execution, r: &[f64], out: &mut [f64]) {
        dense_matvec(exec, &self.at, r, out);
    }
}

fn dense_matvec(exec: Execution, a: &Array2<f64>, x: &[f64], out: &mut [f64]) {
    let k = a.ncols();
    let data = a
        .as_slice()
        .expect("dense operators are stored in standard layout");
    fill_indexed(exec, out, |i| dot(&data[i * k..(i + 1) * k], x));
}

#[derive(Clone)]
pub enum Storage {
    Dense(Array2<f64>),
    Csr(CsrMatrix),
    Gram(GramMatrix),
    Diagonal(Array1<f64>),
    /// `Σ cᵢ Sᵢ`.
    Sum(Vec<(f64, Arc<SymOperator>)>),
}

/// Symmetric linear operator `v ↦ S v` on `ℝ^dim`.
pub struct SymOperator {
    dim: usize,
    storage: Storage,
    exec: Execution,
    lambda_max: OnceLock<f64>,
}

impl fmt::Debug for SymOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.storage {
            Storage::Dense(_) => "dense",
            Storage::Csr(_) => "csr",
            Storage::Gram(_) => "gram",
            Storage::Diagonal(_) => "diagonal",
            Storage::Sum(_) => "sum",
        };
        f.debug_struct("SymOperator")
            .field("dim", &self.dim)
            .field("storage", &kind)
            .finish()
    }
}

impl SymOperator {
    fn from_storage(dim: usize, storage: Storage) -> Self {
        Self {
            dim,
            storage,
            exec: Execution::default(),
            lambda_max: OnceLock::new(),
        }
    }

    pub fn dense(a: Array2<f64>) -> Result<Self> {
        check_dim(a.nrows(), a.ncols())?;
        let dim = a.nrows();
        Ok(Self::from_storage(
            dim,
            Storage::Dense(a.as_standard_layout().into_owned()),
        ))
    }

    pub fn csr(m: CsrMatrix) -> Self {
        Self::from_storage(m.dim(), Storage::Csr(m))
    }

    pub fn gram(g: GramMatrix) -> Self {
        Self::from_storage(g.cols(), Storage::Gram(g))
    }

    pub fn diagonal_matrix(d: Array1<f64>) -> Self {
        Self::from_storage(d.len(), Storage::Diagonal(d))
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        Self::diagonal_matrix(Array1::from_elem(dim, s))
    }

    pub fn combination(terms: Vec<(f64, Arc<SymOperator>)>) -> Result<Self> {
        let dim = terms
            .first()
            .map(|(_, op)| op.dim())
            .ok_or_else(|| DcError::InvalidParameter("empty operator combination".into()))?;
        for (_, op) in &terms {
            check_dim(dim, op.dim())?;
        }
        Ok(Self::from_storage(dim, Storage::Sum(terms)))
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        match &self.storage {
            Storage::Dense(a) => dense_matvec(self.exec, a, x, out),
            Storage::Csr(m) => m.matvec_into(self.exec, x, out),
            Storage::Gram(g) => {
                let mut t = vec![0.0; g.rows()];
                g.forward_into(self.exec, x, &mut t);
                g.adjoint_into(self.exec, &t, out);
            }
            Storage::Diagonal(d) => {
                for ((o, &di), &xi) in out.iter_mut().zip(d.iter()).zip(x) {
                    *o = di * xi;
                }
            }
            Storage::Sum(terms) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let mut t = vec![0.0; self.dim];
                for (c, op) in terms {
                    op.apply_into(x, &mut t);
                    for (o, &ti) in out.iter_mut().zip(&t) {
                        *o += c * ti;
                    }
                }
            }
        }
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let x = x.as_standard_layout();
        let mut out = Array1::zeros(self.dim);
        self.apply_into(
            x.as_slice().expect("standard layout"),
            out.as_slice_mut().expect("fresh array"),
        );
        out
    }

    /// `⟨x, S x⟩`.
    pub fn quad_form(&self, x: ArrayView1<f64>) -> f64 {
        let sx = self.apply(x);
        x.dot(&sx)
    }

    pub fn diagonal(&self) -> Array1<f64> {
        match &self.storage {
            Storage::Dense(a) => a.diag().to_owned(),
            Storage::Csr(m) => Array1::from_iter((0..m.dim()).map(|i| m.get(i, i))),
            Storage::Gram(g) => g.a().map_axis(ndarray::Axis(0), |c| c.dot(&c)),
            Storage::Diagonal(d) => d.clone(),
            Storage::Sum(terms) => {
                let mut d = Array1::zeros(self.dim);
                for (c, op) in terms {
                    d.scaled_add(*c, &op.diagonal());
                }
                d
            }
        }
    }

    /// The diagonal when the operator is structurally diagonal.
    pub fn as_diagonal(&self) -> Option<Array1<f64>> {
        match &self.storage {
            Storage::Diagonal(d) => Some(d.clone()),
            Storage::Csr(m) => {
                let diag_only = (0..m.dim()).all(|i| m.row(i).0.iter().all(|&j| j == i));
                diag_only.then(|| self.diagonal())
            }
            Storage::Dense(a) => {
                let diag_only = a.indexed_iter().all(|((i, j), &v)| i == j || v == 0.0);
                diag_only.then(|| self.diagonal())
            }
            Storage::Gram(_) => None,
            Storage::Sum(terms) => {
                let mut d = Array1::zeros(self.dim);
                for (c, op) in terms {
                    d.scaled_add(*c, &op.as_diagonal()?);
                }
                Some(d)
            }
        }
    }

    /// Upper bounds on `Σ_{j≠i} |s_ij|` per row; exact except for sums of
    /// operators. `None` for implicitly stored Gram matrices.
    pub fn off_diagonal_abs_row_sums(&self) -> Option<Array1<f64>> {
        match &self.storage {
            Storage::Dense(a) => Some(Array1::from_iter(a.outer_iter().enumerate().map(
                |(i, row)| {
                    row.iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, v)| v.abs())
                        .sum::<f64>()
                },
            ))),
            Storage::Csr(m) => Some(Array1::from_iter((0..m.dim()).map(|i| {
                let (cols, vals) = m.row(i);
                cols.iter()
                    .zip(vals)
                    .filter(|&(&j, _)| j != i)
                    .map(|(_, v)| v.abs())
                    .sum::<f64>()
            }))),
            Storage::Gram(_) => None,
            Storage::Diagonal(d) => Some(Array1::zeros(d.len())),
            Storage::Sum(terms) => {
                let mut s = Array1::zeros(self.dim);
                for (c, op) in terms {
                    s.scaled_add(c.abs(), &op.off_diagonal_abs_row_sums()?);
                }
                Some(s)
            }
        }
    }

    /// Power-iteration estimate of the largest eigenvalue (cached).
    pub fn largest_eigenvalue(&self) -> f64 {
        *self
            .lambda_max
            .get_or_init(|| power_iteration(self.dim, |x, out| self.apply_into(x, out)))
    }

    /// Largest-eigenvalue estimate inflated by [`EIGEN_SAFETY`].
    pub fn safe_largest_eigenvalue(&self) -> f64 {
        EIGEN_SAFETY * self.largest_eigenvalue()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.dim;
        let mut out = Array2::zeros((n, n));
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            for i in 0..n {
                out[[i, j]] = col[i];
            }
            e[j] = 0.0;
        }
        out
    }

    /// Largest relative asymmetry `|⟨Su,v⟩ − ⟨u,Sv⟩| / (‖Su‖‖v‖ + ‖u‖‖Sv‖)`
    /// over random probe pairs.
    pub fn symmetry_defect(&self, trials: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let u = Array1::from_iter((0..self.dim).map(|_| rng.gen_range(-1.0..1.0)));
            let v = Array1::from_iter((0..self.dim).map(|_| rng.gen_range(-1.0..1.0)));
            let su = self.apply(u.view());
            let sv = self.apply(v.view());
            let lhs = su.dot(&v);
            let rhs = u.dot(&sv);
            let scale = norm(su.view()) * norm(v.view()) + norm(u.view()) * norm(sv.view());
            if scale > 0.0 {
                worst = worst.max((lhs - rhs).abs() / scale);
            }
        }
        worst
    }
}

/// Rayleigh-quotient power iteration, stopped after a fixed budget or when the
/// estimate's relative change falls below `1e-10`. Deterministic start vector.
pub fn power_iteration<F>(dim: usize, mut apply: F) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_9a11);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..1.5)).collect();
    let nv = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; dim];
    let mut estimate = 0.0;
    for it in 0..POWER_MAX_ITER {
        apply(&v, &mut w);
        let rq = dot(&v, &w);
        let nw = dot(&w, &w).sqrt();
        if nw == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        let converged = it > 0 && (rq - estimate).abs() <= POWER_RTOL * rq.abs();
        estimate = rq;
        if converged {
            break;
        }
    }
    estimate
}

pub fn norm(x: ArrayView1<f64>) -> f64 {
    x.dot(&x).sqrt()
}
