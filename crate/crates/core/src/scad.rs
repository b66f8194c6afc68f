//! SCAD-regularized least squares and its Huber-smoothed variant.
//!
//! `S(x) = μ‖x‖₁ − Σ s̃(xᵢ)` with the convex, C¹ correction
//!
//! ```text
//! s̃(t) = 0                              |t| ≤ μ
//!        (|t| − μ)² / (2(θ−1))           μ < |t| < θμ
//!        μ|t| − (θ+1)μ²/2                |t| ≥ θμ
//! ```

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Zip};
use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, DcError, Result};
use crate::model::{DcProblem, L1Norm, ProxRegularized, Quadratic, Term, ZeroTerm};
use crate::operator::{GramMatrix, SymOperator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScadParams {
    pub mu: f64,
    pub theta: f64,
    pub alpha: f64,
}

impl ScadParams {
    /// `alpha = None` selects the Huber knee `μ/2`.
    pub fn new(mu: f64, theta: f64, alpha: Option<f64>) -> Result<Self> {
        let p = Self {
            mu,
            theta,
            alpha: alpha.unwrap_or(0.5 * mu),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(DcError::InvalidParameter("mu must be positive".into()));
        }
        if !(self.theta > 1.0) {
            return Err(DcError::InvalidParameter("theta must exceed 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < self.mu) {
            return Err(DcError::InvalidParameter(
                "alpha must lie in (0, mu)".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ScadParams {
    fn default() -> Self {
        Self {
            mu: 5e-4,
            theta: 10.0,
            alpha: 2.5e-4,
        }
    }
}

pub fn tilde_s(t: f64, p: &ScadParams) -> f64 {
    let a = t.abs();
    if a <= p.mu {
        0.0
    } else if a < p.theta * p.mu {
        let e = a - p.mu;
        e * e / (2.0 * (p.theta - 1.0))
    } else {
        p.mu * a - 0.5 * (p.theta + 1.0) * p.mu * p.mu
    }
}

/// `sign(t) [min(θμ, |t|) − μ]₊ / (θ − 1)`.
pub fn tilde_s_grad(t: f64, p: &ScadParams) -> f64 {
    let a = t.abs();
    let g = ((p.theta * p.mu).min(a) - p.mu).max(0.0) / (p.theta - 1.0);
    g.copysign(t)
}

pub fn scad_value(x: ArrayView1<f64>, p: &ScadParams) -> f64 {
    x.iter().map(|&t| p.mu * t.abs() - tilde_s(t, p)).sum()
}

pub fn huber(t: f64, alpha: f64) -> f64 {
    let a = t.abs();
    if a <= alpha {
        t * t / (2.0 * alpha)
    } else {
        a - 0.5 * alpha
    }
}

pub fn huber_grad(t: f64, alpha: f64) -> f64 {
    if t.abs() <= alpha {
        t / alpha
    } else {
        t.signum()
    }
}

/// The four-region Huber-SCAD penalty `s_M(t) = μ𝓗_α(t) − s̃(t)`.
pub fn huber_scad_value(t: f64, p: &ScadParams) -> f64 {
    let (mu, theta, alpha) = (p.mu, p.theta, p.alpha);
    let a = t.abs();
    if a <= alpha {
        mu * a * a / (2.0 * alpha)
    } else if a <= mu {
        mu * (a - 0.5 * alpha)
    } else if a < theta * mu {
        let e = a - mu;
        mu * (a - 0.5 * alpha - e * e / (2.0 * (theta - 1.0) * mu))
    } else {
        0.5 * mu * (mu * (theta + 1.0) - alpha)
    }
}

/// Design matrix and response.
#[derive(Clone, Debug)]
pub struct LeastSquaresData {
    gram: Arc<SymOperator>,
    b: Array1<f64>,
}

impl LeastSquaresData {
    pub fn new(a: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        if a.ncols() == 0 {
            return Err(DcError::InvalidParameter(
                "design matrix has no columns".into(),
            ));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(DcError::InvalidParameter(
                "least-squares data must be finite".into(),
            ));
        }
        Ok(Self {
            gram: Arc::new(SymOperator::gram(GramMatrix::new(a))),
            b,
        })
    }

    fn matrix(&self) -> &GramMatrix {
        match self.gram.storage() {
            crate::operator::Storage::Gram(g) => g,
            _ => unreachable!("least-squares data always stores a Gram operator"),
        }
    }

    pub fn a(&self) -> &Array2<f64> {
        self.matrix().a()
    }

    pub fn b(&self) -> &Array1<f64> {
        &self.b
    }

    pub fn rows(&self) -> usize {
        self.matrix().rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix().cols()
    }

    /// `AᵀA` as an operator.
    pub fn gram(&self) -> &Arc<SymOperator> {
        &self.gram
    }

    /// `λ_{AᵀA}`, inflated by the safety factor.
    pub fn lambda_max(&self) -> f64 {
        self.gram.safe_largest_eigenvalue()
    }

    fn residual(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let g = self.matrix();
        let x = x.as_standard_layout();
        let mut r = Array1::zeros(g.rows());
        g.forward_into(
            crate::parallel::Execution::default(),
            x.as_slice().expect("standard layout"),
            r.as_slice_mut().expect("fresh array"),
        );
        r -= &self.b;
        r
    }

    fn adjoint(&self, r: ArrayView1<f64>) -> Array1<f64> {
        let g = self.matrix();
        let mut out = Array1::zeros(g.cols());
        g.adjoint_into(
            crate::parallel::Execution::default(),
            r.as_slice().expect("contiguous residual"),
            out.as_slice_mut().expect("fresh array"),
        );
        out
    }
}

/// `½‖Ax − b‖²`.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    data: LeastSquaresData,
    atb: Array1<f64>,
}

impl LeastSquares {
    pub fn new(data: LeastSquaresData) -> Self {
        let atb = data.adjoint(data.b.view());
        Self { data, atb }
    }
}

impl Term for LeastSquares {
    fn name(&self) -> &str {
        "least_squares"
    }
    fn dim(&self) -> Option<usize> {
        Some(self.data.cols())
    }
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        let r = self.data.residual(x);
        0.5 * r.dot(&r)
    }
    fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let r = self.data.residual(x);
        self.data.adjoint(r.view())
    }
    fn is_smooth(&self) -> bool {
        true
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(self.data.lambda_max())
    }
    fn quadratic(&self) -> Option<Quadratic> {
        Some(Quadratic {
            hessian: self.data.gram.clone(),
            linear: self.atb.clone(),
        })
    }
}

/// `μ Σ 𝓗_α(xᵢ)`.
#[derive(Clone, Debug)]
pub struct HuberL1 {
    mu: f64,
    alpha: f64,
}

impl HuberL1 {
    pub fn new(mu: f64, alpha: f64) -> Result<Self> {
        if !(mu >= 0.0 && alpha > 0.0) {
            return Err(DcError::InvalidParameter(
                "Huber needs mu ≥ 0 and alpha > 0".into(),
            ));
        }
        Ok(Self { mu, alpha })
    }
}

impl Term for HuberL1 {
    fn name(&self) -> &str {
        "huber"
    }
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        self.mu * x.iter().map(|&t| huber(t, self.alpha)).sum::<f64>()
    }
    fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        x.mapv(|t| self.mu * huber_grad(t, self.alpha))
    }
    fn is_smooth(&self) -> bool {
        true
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(self.mu / self.alpha)
    }
    fn prox_quadratic(&self, w: ArrayView1<f64>, c: ArrayView1<f64>) -> Option<Array1<f64>> {
        if w.iter().any(|&wi| !(wi > 0.0)) {
            return None;
        }
        let (mu, alpha) = (self.mu, self.alpha);
        Some(Zip::from(&w).and(&c).map_collect(|&w, &c| {
            if c.abs() <= alpha * w + mu {
                c / (w + mu / alpha)
            } else {
                (c - mu * c.signum()) / w
            }
        }))
    }
}

/// `Σ s̃(xᵢ)`.
#[derive(Clone, Debug)]
pub struct TildeS {
    params: ScadParams,
}

impl TildeS {
    pub fn new(params: ScadParams) -> Self {
        Self { params }
    }
}

impl Term for TildeS {
    fn name(&self) -> &str {
        "tilde_s"
    }
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        x.iter().map(|&t| tilde_s(t, &self.params)).sum()
    }
    fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        x.mapv(|t| tilde_s_grad(t, &self.params))
    }
    fn is_smooth(&self) -> bool {
        true
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(1.0 / (self.params.theta - 1.0))
    }
}

/// `(λ̂/2)‖x‖² − ½‖Ax − b‖² + Σ s̃(xᵢ)`, convex since `λ̂ ≥ λ_max(AᵀA)`.
#[derive(Clone, Debug)]
pub struct BoostedConcavePart {
    lambda_hat: f64,
    ls: LeastSquares,
    tilde: TildeS,
}

impl Term for BoostedConcavePart {
    fn name(&self) -> &str {
        "boosted_g2"
    }
    fn dim(&self) -> Option<usize> {
        self.ls.dim()
    }
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        0.5 * self.lambda_hat * x.dot(&x) - self.ls.value(x) + self.tilde.value(x)
    }
    fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut g = self.tilde.subgradient(x);
        g -= &self.ls.subgradient(x);
        g.scaled_add(self.lambda_hat, &x);
        g
    }
    fn is_smooth(&self) -> bool {
        true
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(self.lambda_hat + 1.0 / (self.tilde.params.theta - 1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScadVariant {
    /// `g1 = μ‖·‖₁`.
    L1,
    /// `g1 = μ𝓗_α`.
    Huber,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScadSplit {
    /// `f = ½‖Ax−b‖²`, `g2 = Σ s̃`.
    Standard,
    /// `f = 0`, `g1 += (λ̂/2)‖·‖²`, `g2 = (λ̂/2)‖·‖² − ½‖Ax−b‖² + Σ s̃`.
    Boosted,
}

pub fn build_scad_problem(
    data: &LeastSquaresData,
    params: &ScadParams,
    variant: ScadVariant,
    split: ScadSplit,
) -> Result<DcProblem> {
    params.validate()?;
    let k = data.cols();
    let penalty: Box<dyn Term> = match variant {
        ScadVariant::L1 => Box::new(L1Norm::new(params.mu, 1.0)?),
        ScadVariant::Huber => Box::new(HuberL1::new(params.mu, params.alpha)?),
    };
    let ls = LeastSquares::new(data.clone());
    let label = format!("scad/{variant:?}/{split:?}").to_lowercase();
    let problem = match split {
        ScadSplit::Standard => {
            DcProblem::new(k, Box::new(ls), penalty, Box::new(TildeS::new(*params)))?
        }
        ScadSplit::Boosted => {
            let lambda_hat = data.lambda_max();
            DcProblem::new(
                k,
                Box::new(ZeroTerm::new(k)),
                Box::new(ProxRegularized::new(penalty, lambda_hat)?),
                Box::new(BoostedConcavePart {
                    lambda_hat,
                    ls,
                    tilde: TildeS::new(*params),
                }),
            )?
        }
    };
    Ok(problem.with_label(label))
}

/// Seeded sparse-recovery instance: `A` with `N(0, 1/m)` entries, an
/// `s`-sparse ±1 ground truth and `b = A x♮ + N(0, σ²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScad {
    pub m: usize,
    pub k: usize,
    pub sparsity: usize,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
}

fn default_noise() -> f64 {
    0.01
}

#[derive(Clone, Debug)]
pub struct SyntheticInstance {
    pub data: LeastSquaresData,
    pub truth: Array1<f64>,
}

impl SyntheticScad {
    pub fn generate(&self, seed: u64) -> Result<SyntheticInstance> {
        if self.m == 0 || self.k == 0 || self.sparsity > self.k {
            return Err(DcError::InvalidParameter(
                "synthetic instance needs m, k ≥ 1 and sparsity ≤ k".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (self.m as f64).sqrt();
        let a = Array2::from_shape_simple_fn((self.m, self.k), || {
            scale * rng.sample::<f64, _>(StandardNormal)
        });
        let mut truth = Array1::zeros(self.k);
        for idx in sample(&mut rng, self.k, self.sparsity) {
            truth[idx] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        let mut b = a.dot(&truth);
        for bi in b.iter_mut() {
            *bi += self.noise_std * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(SyntheticInstance {
            data: LeastSquaresData::new(a, b)?,
            truth,
        })
    }
}
