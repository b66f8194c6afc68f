//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

pub mod checks;

use ndarray::{Array1, Array2};
use rand::Rng;

/// Dense Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut m = a.clone();
    let mut r = b.clone();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap();
        if piv != col {
            for k in 0..n {
                m.swap([col, k], [piv, k]);
            }
            r.swap(col, piv);
        }
        for row in col + 1..n {
            let factor = m[[row, col]] / m[[col, col]];
            for k in col..n {
                m[[row, k]] -= factor * m[[col, k]];
            }
            r[row] -= factor * r[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[[row, k]] * x[k]).sum();
        x[row] = (r[row] - s) / m[[row, row]];
    }
    x
}

/// Random symmetric positive definite matrix `BᵀB + shift·I`.
pub fn random_spd(rng: &mut impl Rng, n: usize, shift: f64) -> Array2<f64> {
    let b = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
    b.t().dot(&b) + Array2::<f64>::eye(n) * shift
}

/// Central difference `(f(t+h) − f(t−h)) / 2h`.
pub fn central_difference(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    (f(t + h) - f(t - h)) / (2.0 * h)
}

/// Relative error with a floor on the denominator.
pub fn rel_err(approx: f64, exact: f64) -> f64 {
    let scale = exact.abs().max(approx.abs());
    if scale == 0.0 {
        0.0
    } else {
        (approx - exact).abs() / scale
    }
}

/// `count` points in `[-half, half]` at least `gap` away from every kink.
pub fn points_off_kinks(
    rng: &mut impl Rng,
    half: f64,
    kinks: &[f64],
    gap: f64,
    count: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let t = rng.gen_range(-half..half);
        if kinks
            .iter()
            .all(|&k| (t - k).abs() >= gap && (t + k).abs() >= gap)
        {
            out.push(t);
        }
    }
    out
}

/// A naive LIBSVM line reader: label, then `index:value` pairs.
pub fn naive_libsvm_line(line: &str) -> Option<(f64, Vec<(usize, f64)>)> {
    let mut parts = line.split_whitespace();
    let raw: f64 = parts.next()?.parse().ok()?;
    let label = if raw > 0.0 { 1.0 } else { -1.0 };
    let mut entries = Vec::new();
    for p in parts {
        let (i, v) = p.split_once(':')?;
        let i: usize = i.parse().ok()?;
        entries.push((i - 1, v.parse().ok()?));
    }
    Some((label, entries))
}

/// CSV text with the named column removed and the metadata line kept.
pub fn drop_column(text: &str, column: &str) -> String {
    let mut lines = text.lines();
    let meta = lines.next().unwrap_or_default().to_owned();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let Some(skip) = header.iter().position(|&c| c == column) else {
        return text.to_owned();
    };
    let strip = |l: &str| {
        l.split(',')
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, f)| f)
            .collect::<Vec<_>>()
            .join(",")
    };
    std::iter::once(meta)
        .chain(std::iter::once(strip(&header.join(","))))
        .chain(lines.map(strip))
        .collect::<Vec<_>>()
        .join("\n")
}
