//! Nonlocal graph Ginzburg–Landau segmentation with prior labels.
//!
//! ```text
//! E(x) = Σᵢ Σⱼ (τ/2) wᵢⱼ (xᵢ − xⱼ)² + (1/τ) 𝕎(x) + (γ/2) Σᵢ Λᵢ (xᵢ − yᵢ)²
//! 𝕎(x) = ¼ Σᵢ (xᵢ² − 1)²
//! ```
//!
//! The double sum runs over ordered pairs, so the Dirichlet part equals
//! `τ⟨x, L x⟩` for the graph Laplacian `L = D − W`.

use std::sync::Arc;

use ndarray::{Array1, ArrayView1, Zip};
use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, DcError, Result};
use crate::model::{DcProblem, QuadraticTerm, Term};
use crate::operator::{CsrMatrix, SymOperator};
use crate::parallel::{map_indexed, Execution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlParams {
    pub tau: f64,
    pub gamma: f64,
    /// Side of the square neighbourhood window; odd.
    #[serde(rename = "box")]
    pub box_size: usize,
    /// Side of the square patch compared between pixels; odd.
    pub patch: usize,
    /// Similarity bandwidth; self-tuned from sampled patch distances when absent.
    pub kappa: Option<f64>,
    /// Fraction of in-window pairs sampled when self-tuning `κ²`.
    pub kappa_sample: f64,
    /// Quadratic shift `c` added to both `g1` and `g2`; `g2` is convex for
    /// `c ≥ 2`.
    pub convexify_c: f64,
}

impl Default for GlParams {
    fn default() -> Self {
        Self {
            tau: 10.0,
            gamma: 10.0,
            box_size: 25,
            patch: 5,
            kappa: None,
            kappa_sample: 0.01,
            convexify_c: 2.0,
        }
    }
}

impl GlParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DcError::InvalidParameter(m.into()));
        if !(self.tau > 0.0) || !(self.gamma > 0.0) {
            return bad("tau and gamma must be positive");
        }
        if self.box_size.is_multiple_of(2) || self.patch.is_multiple_of(2) {
            return bad("box and patch sides must be odd");
        }
        if self.kappa.is_some_and(|k| !(k > 0.0)) {
            return bad("kappa must be positive");
        }
        if !(self.kappa_sample > 0.0 && self.kappa_sample <= 1.0) {
            return bad("kappa_sample must lie in (0, 1]");
        }
        if !(self.convexify_c >= 2.0) {
            return bad("convexify_c must be at least 2");
        }
        Ok(())
    }

    /// Window side actually used on an `h × w` image.
    pub fn effective_box(&self, height: usize, width: usize) -> usize {
        let cap = 2 * height.min(width) / 3;
        let cap = if cap.is_multiple_of(2) {
            cap.saturating_sub(1)
        } else {
            cap
        };
        self.box_size.min(cap.max(1))
    }
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        check_dim(height * width, pixels.len())?;
        if height == 0 || width == 0 {
            return Err(DcError::InvalidParameter("empty image".into()));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(DcError::InvalidParameter(
                "intensities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Intensity with symmetric (half-sample) reflection outside the frame.
    fn reflected(&self, r: isize, c: isize) -> f64 {
        let reflect = |i: isize, n: usize| -> usize {
            let n = n as isize;
            let period = 2 * n;
            let m = i.rem_euclid(period);
            (if m < n { m } else { period - 1 - m }) as usize
        };
        self.pixels[reflect(r, self.height) * self.width + reflect(c, self.width)]
    }

    /// Flattened `patch × patch` window centred at pixel `i`.
    pub fn patch(&self, i: usize, side: usize) -> Vec<f64> {
        let half = (side / 2) as isize;
        let (r, c) = ((i / self.width) as isize, (i % self.width) as isize);
        let mut out = Vec::with_capacity(side * side);
        for dr in -half..=half {
            for dc in -half..=half {
                out.push(self.reflected(r + dr, c + dc));
            }
        }
        out
    }
}

/// Symmetric nonnegative weights supported on window pairs.
#[derive(Clone, Debug)]
pub struct GraphWeights {
    height: usize,
    width: usize,
    box_size: usize,
    kappa_sq: f64,
    matrix: CsrMatrix,
    degree: Array1<f64>,
}

impl GraphWeights {
    pub fn dim(&self) -> usize {
        self.degree.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn box_size(&self) -> usize {
        self.box_size
    }

    pub fn kappa_sq(&self) -> f64 {
        self.kappa_sq
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn degree(&self) -> &Array1<f64> {
        &self.degree
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    /// `Σᵢ Σⱼ wᵢⱼ (xᵢ − xⱼ)²` over ordered pairs.
    pub fn ordered_dirichlet_sum(&self, x: ArrayView1<f64>) -> f64 {
        (0..self.dim())
            .map(|i| {
                let (cols, vals) = self.matrix.row(i);
                cols.iter()
                    .zip(vals)
                    .map(|(&j, &w)| w * (x[i] - x[j]).powi(2))
                    .sum::<f64>()
            })
            .sum()
    }

    /// `s·L + diag(extra)` as a sparse operator.
    pub fn scaled_laplacian_plus(&self, s: f64, extra: ArrayView1<f64>) -> Result<SymOperator> {
        check_dim(self.dim(), extra.len())?;
        let rows = (0..self.dim())
            .map(|i| {
                let (cols, vals) = self.matrix.row(i);
                let mut row: Vec<(usize, f64)> =
                    cols.iter().zip(vals).map(|(&j, &w)| (j, -s * w)).collect();
                row.push((i, s * self.degree[i] + extra[i]));
                row
            })
            .collect();
        Ok(SymOperator::csr(CsrMatrix::from_rows(self.dim(), rows)?))
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// In-window neighbours of pixel `i`, excluding `i`.
fn window(i: usize, height: usize, width: usize, half: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (i / width, i % width);
    let rows = r.saturating_sub(half)..=(r + half).min(height - 1);
    rows.flat_map(move |rr| {
        let cols = c.saturating_sub(half)..=(c + half).min(width - 1);
        cols.map(move |cc| rr * width + cc)
    })
    .filter(move |&j| j != i)
}

/// Mean squared patch distance over a seeded sample of window pairs.
fn self_tuned_kappa_sq(
    patches: &[Vec<f64>],
    height: usize,
    width: usize,
    half: usize,
    fraction: f64,
    seed: u64,
) -> f64 {
    let side = 2 * half + 1;
    let n = height * width;
    let target = ((n * (side * side - 1)) as f64 * fraction).ceil().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut count) = (0.0, 0usize);
    let mut attempts = 0usize;
    while count < target && attempts < 20 * target {
        attempts += 1;
        let i = rng.gen_range(0..n);
        let dr = rng.gen_range(0..side) as isize - half as isize;
        let dc = rng.gen_range(0..side) as isize - half as isize;
        let (r, c) = ((i / width) as isize + dr, (i % width) as isize + dc);
        if (dr, dc) == (0, 0) || r < 0 || c < 0 || r >= height as isize || c >= width as isize {
            continue;
        }
        let j = r as usize * width + c as usize;
        sum += squared_distance(&patches[i], &patches[j]);
        count += 1;
    }
    let mean = if count > 0 { sum / count as f64 } else { 0.0 };
    if mean > 0.0 {
        mean
    } else {
        1.0
    }
}

/// `wᵢⱼ = exp(−‖Pᵢ − Pⱼ‖² / κ²)` on window pairs.
pub fn build_weights(
    image: &Image,
    params: &GlParams,
    seed: u64,
    exec: Execution,
) -> Result<GraphWeights> {
    params.validate()?;
    let (h, w) = (image.height(), image.width());
    if h < params.patch || w < params.patch {
        return Err(DcError::InvalidParameter(format!(
            "image {h}x{w} is smaller than the {p}x{p} patch",
            p = params.patch
        )));
    }
    let box_size = params.effective_box(h, w);
    let half = box_size / 2;
    let n = image.len();
    let patches = map_indexed(exec, n, |i| image.patch(i, params.patch));
    let kappa_sq = match params.kappa {
        Some(k) => k * k,
        None => self_tuned_kappa_sq(&patches, h, w, half, params.kappa_sample, seed),
    };
    let rows: Vec<Vec<(usize, f64)>> = map_indexed(exec, n, |i| {
        window(i, h, w, half)
            .map(|j| {
                (
                    j,
                    (-squared_distance(&patches[i], &patches[j]) / kappa_sq).exp(),
                )
            })
            .filter(|&(_, v)| v > 0.0)
            .collect()
    });
    let degree = Array1::from_iter(rows.iter().map(|r| r.iter().map(|&(_, v)| v).sum::<f64>()));
    Ok(GraphWeights {
        height: h,
        width: w,
        box_size,
        kappa_sq,
        matrix: CsrMatrix::from_rows(n, rows)?,
        degree,
    })
}

/// Prior mask `Λ` and labels `y ∈ {−1, 0, +1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorLabels {
    mask: Array1<f64>,
    labels: Array1<f64>,
}

impl PriorLabels {
    pub fn new(mask: Array1<f64>, labels: Array1<f64>) -> Result<Self> {
        check_dim(mask.len(), labels.len())?;
        for (&m, &y) in mask.iter().zip(&labels) {
            if m != 0.0 && m != 1.0 {
                return Err(DcError::InvalidParameter("prior mask must be 0/1".into()));
            }
            if ![-1.0, 0.0, 1.0].contains(&y) {
                return Err(DcError::InvalidParameter(
                    "prior labels must be -1, 0 or 1".into(),
                ));
            }
            if y != 0.0 && m == 0.0 {
                return Err(DcError::InvalidParameter(
                    "labelled pixel outside the prior mask".into(),
                ));
            }
        }
        Ok(Self { mask, labels })
    }

    /// Labels from a signed vector; nonzero entries become masked.
    pub fn from_labels(labels: Array1<f64>) -> Result<Self> {
        let mask = labels.mapv(|y| if y != 0.0 { 1.0 } else { 0.0 });
        Self::new(mask, labels)
    }

    pub fn mask(&self) -> &Array1<f64> {
        &self.mask
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0.0).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlEnergyTerms {
    pub dirichlet: f64,
    pub double_well: f64,
    pub fidelity: f64,
}

impl GlEnergyTerms {
    pub fn total(&self) -> f64 {
        self.dirichlet + self.double_well + self.fidelity
    }
}

/// `¼ Σ (xᵢ² − 1)²`.
pub fn double_well(x: ArrayView1<f64>) -> f64 {
    0.25 * x.iter().map(|&v| (v * v - 1.0).powi(2)).sum::<f64>()
}

/// The three parts of the energy, evaluated from their definitions.
pub fn gl_energy_terms(
    x: ArrayView1<f64>,
    weights: &GraphWeights,
    prior: &PriorLabels,
    params: &GlParams,
) -> Result<GlEnergyTerms> {
    check_dim(weights.dim(), x.len())?;
    check_dim(weights.dim(), prior.len())?;
    let fidelity = 0.5
        * params.gamma
        * Zip::from(&x)
            .and(&prior.mask)
            .and(&prior.labels)
            .fold(0.0, |acc, &x, &m, &y| acc + m * (x - y) * (x - y));
    Ok(GlEnergyTerms {
        dirichlet: 0.5 * params.tau * weights.ordered_dirichlet_sum(x),
        double_well: double_well(x) / params.tau,
        fidelity,
    })
}

/// `(1/τ)((c/2)‖x‖² − 𝕎(x))`, convex on `{3xᵢ² ≤ c + 1}`.
#[derive(Clone, Debug)]
pub struct ShiftedWell {
    dim: usize,
    tau: f64,
    c: f64,
}

impl ShiftedWell {
    /// Needs `c ≥ 2`, so the shifted well is convex on `[−1, 1]`.
    pub fn new(dim: usize, tau: f64, c: f64) -> Result<Self> {
        if !(tau > 0.0) || !(c >= 2.0) {
            return Err(DcError::InvalidParameter("need tau > 0 and c >= 2".into()));
        }
        Ok(Self { dim, tau, c })
    }

    /// `(c/2)s² − ¼(s²−1)²` on `[−1, 1]`, tangent-line continuation outside.
    fn coordinate(&self, s: f64) -> f64 {
        let a = s.abs();
        if a <= 1.0 {
            0.5 * self.c * s * s - 0.25 * (s * s - 1.0).powi(2)
        } else {
            0.5 * self.c + self.c * (a - 1.0)
        }
    }

    fn coordinate_slope(&self, s: f64) -> f64 {
        if s.abs() <= 1.0 {
            (self.c + 1.0) * s - s * s * s
        } else {
            self.c * s.signum()
        }
    }
}

impl Term for ShiftedWell {
    fn name(&self) -> &str {
        "shifted double well"
    }
    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        x.iter().map(|&s| self.coordinate(s)).sum::<f64>() / self.tau
    }
    fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        x.mapv(|s| self.coordinate_slope(s) / self.tau)
    }
    fn is_smooth(&self) -> bool {
        true
    }
    fn lipschitz(&self) -> Option<f64> {
        Some((self.c + 1.0) / self.tau)
    }
}

/// `f` = fidelity, `g1` = Dirichlet + `(c/2τ)‖x‖²`, `g2` = [`ShiftedWell`].
pub fn build_gl_problem(
    weights: &GraphWeights,
    prior: &PriorLabels,
    params: &GlParams,
) -> Result<DcProblem> {
    params.validate()?;
    let n = weights.dim();
    check_dim(n, prior.len())?;
    let fid_diag = prior.mask.mapv(|m| params.gamma * m);
    let fid_linear = &fid_diag * &prior.labels;
    let fid_offset = 0.5 * fid_linear.dot(&prior.labels);
    let f = QuadraticTerm::new(
        Arc::new(SymOperator::diagonal_matrix(fid_diag)),
        fid_linear,
        fid_offset,
    )?
    .named("fidelity");
    let shift = params.convexify_c / params.tau;
    let g1_hessian =
        weights.scaled_laplacian_plus(2.0 * params.tau, Array1::from_elem(n, shift).view())?;
    let g1 = QuadraticTerm::new(Arc::new(g1_hessian), Array1::zeros(n), 0.0)?
        .named("dirichlet")
        .with_strong_convexity(shift);
    let g2 = ShiftedWell::new(n, params.tau, params.convexify_c)?;
    Ok(DcProblem::new(n, Box::new(f), Box::new(g1), Box::new(g2))?.with_label("gl"))
}

/// `2|X ∩ Y| / (|X| + |Y|)`, and 1 when both masks are empty.
pub fn dice(seg: &[bool], truth: &[bool]) -> Result<f64> {
    check_dim(truth.len(), seg.len())?;
    let (mut inter, mut total) = (0usize, 0usize);
    for (&s, &t) in seg.iter().zip(truth) {
        inter += usize::from(s && t);
        total += usize::from(s) + usize::from(t);
    }
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    })
}

/// `{xᵢ > 0}`.
pub fn threshold(x: ArrayView1<f64>) -> Vec<bool> {
    x.iter().map(|&v| v > 0.0).collect()
}

/// Seeded noisy two-phase test image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTwoPhase {
    pub height: usize,
    pub width: usize,
    pub foreground: f64,
    pub background: f64,
    pub noise_std: f64,
    /// Fraction of pixels carrying a prior label.
    pub prior_fraction: f64,
}

impl Default for SyntheticTwoPhase {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            foreground: 0.7,
            background: 0.3,
            noise_std: 0.1,
            prior_fraction: 0.05,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SegmentationInstance {
    pub image: Image,
    pub truth: Vec<bool>,
    pub prior: PriorLabels,
}

impl SyntheticTwoPhase {
    /// Three overlapping discs as foreground; priors sampled uniformly.
    pub fn generate(&self, seed: u64) -> Result<SegmentationInstance> {
        let (h, w) = (self.height, self.width);
        if h == 0 || w == 0 {
            return Err(DcError::InvalidParameter("empty image".into()));
        }
        if !(self.noise_std >= 0.0) || !(0.0..=1.0).contains(&self.prior_fraction) {
            return Err(DcError::InvalidParameter(
                "invalid synthetic image parameters".into(),
            ));
        }
        let s = h.min(w) as f64;
        let discs = [
            (0.38 * h as f64, 0.35 * w as f64, 0.2 * s),
            (0.38 * h as f64, 0.65 * w as f64, 0.2 * s),
            (0.66 * h as f64, 0.5 * w as f64, 0.2 * s),
        ];
        let truth: Vec<bool> = (0..h * w)
            .map(|i| {
                let (r, c) = ((i / w) as f64 + 0.5, (i % w) as f64 + 0.5);
                discs
                    .iter()
                    .any(|&(cr, cc, rad)| (r - cr).powi(2) + (c - cc).powi(2) <= rad * rad)
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.noise_std)
            .map_err(|e| DcError::InvalidParameter(e.to_string()))?;
        let pixels = truth
            .iter()
            .map(|&t| {
                let base = if t { self.foreground } else { self.background };
                (base + noise.sample(&mut rng)).clamp(0.0, 1.0)
            })
            .collect();
        let count = ((h * w) as f64 * self.prior_fraction).round() as usize;
        let mut labels = Array1::zeros(h * w);
        for i in sample(&mut rng, h * w, count) {
            labels[i] = if truth[i] { 1.0 } else { -1.0 };
        }
        Ok(SegmentationInstance {
            image: Image::new(h, w, pixels)?,
            truth,
            prior: PriorLabels::from_labels(labels)?,
        })
    }
}
