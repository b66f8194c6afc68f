//! The DC objective `E = f + g1 − g2` and the oracles every solver consumes.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, ArrayView1, Zip};

use crate::error::{check_dim, DcError, Result};
use crate::operator::SymOperator;

/// `∇q(x) = H x − linear` for a quadratic `q(x) = ½⟨x,Hx⟩ − ⟨linear,x⟩ + c`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub hessian: Arc<SymOperator>,
    pub linear: Array1<f64>,
}

impl Quadratic {
    /// Sum of two quadratics on the same space.
    pub fn sum(&self, other: &Quadratic) -> Result<Quadratic> {
        check_dim(self.linear.len(), other.linear.len())?;
        let hessian = SymOperator::combination(vec![
            (1.0, self.hessian.clone()),
            (1.0, other.hessian.clone()),
        ])?;
        Ok(Quadratic {
            hessian: Arc::new(hessian),
            linear: &self.linear + &other.linear,
        })
    }
}

/// One of `f`, `g1`, `g2`.
///
/// `subgradient` returns the gradient for smooth terms and a deterministic
/// subgradient otherwise.
pub trait Term: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Fixed dimension, if the term carries data of a specific size.
    fn dim(&self) -> Option<usize> {
        None
    }

    fn value(&self, x: ArrayView1<f64>) -> f64;

    fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64>;

    fn is_smooth(&self) -> bool;

    /// Lipschitz constant of the gradient, when smooth.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    /// Strong-convexity modulus (may be zero).
    fn strong_convexity(&self) -> f64 {
        0.0
    }

    /// Upper quadratic modulus `σ` of a nonsmooth term around its subgradient
    /// witnesses.
    fn upper_modulus(&self) -> Option<f64> {
        None
    }

    fn quadratic(&self) -> Option<Quadratic> {
        None
    }

    /// `argmin_z term(z) + ½ Σ wᵢ zᵢ² − Σ cᵢ zᵢ` for a nonnegative diagonal
    /// weight `w`, when available in closed form.
    fn prox_quadratic(&self, _w: ArrayView1<f64>, _c: ArrayView1<f64>) -> Option<Array1<f64>> {
        None
    }

    /// Minimal-norm element of `base + ∂term(x)`.
    fn min_norm_residual(&self, x: ArrayView1<f64>, base: ArrayView1<f64>) -> Array1<f64> {
        &base + &self.subgradient(x)
    }

    /// A subgradient at `anchor` chosen with knowledge of a nearby `query`
    /// point. Smooth terms ignore the query.
    fn anchored_subgradient(
        &self,
        anchor: ArrayView1<f64>,
        _query: ArrayView1<f64>,
    ) -> Array1<f64> {
        self.subgradient(anchor)
    }
}

/// Which parts of the objective are differentiable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Smoothness {
    pub f: bool,
    pub g1: bool,
    pub g2: bool,
}

impl Smoothness {
    pub fn energy_smooth(self) -> bool {
        self.f && self.g1 && self.g2
    }
}

/// `E(x) = f(x) + g1(x) − g2(x)`. Immutable after construction.
#[derive(Debug)]
pub struct DcProblem {
    dim: usize,
    f: Box<dyn Term>,
    g1: Box<dyn Term>,
    g2: Box<dyn Term>,
    label: String,
}

impl DcProblem {
    pub fn new(dim: usize, f: Box<dyn Term>, g1: Box<dyn Term>, g2: Box<dyn Term>) -> Result<Self> {
        if dim == 0 {
            return Err(DcError::InvalidParameter(
                "dimension must be positive".into(),
            ));
        }
        for term in [&f, &g1, &g2] {
            if let Some(d) = term.dim() {
                check_dim(dim, d)?;
            }
            if term.lipschitz().is_some_and(|l| !(l >= 0.0)) {
                return Err(DcError::InvalidParameter(format!(
                    "{}: negative Lipschitz constant",
                    term.name()
                )));
            }
            if !(term.strong_convexity() >= 0.0) {
                return Err(DcError::InvalidParameter(format!(
                    "{}: negative strong-convexity modulus",
                    term.name()
                )));
            }
            if term.upper_modulus().is_some_and(|s| !(s > 0.0)) {
                return Err(DcError::InvalidParameter(format!(
                    "{}: upper modulus must be positive",
                    term.name()
                )));
            }
        }
        Ok(Self {
            dim,
            f,
            g1,
            g2,
            label: String::new(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn f(&self) -> &dyn Term {
        self.f.as_ref()
    }

    pub fn g1(&self) -> &dyn Term {
        self.g1.as_ref()
    }

    pub fn g2(&self) -> &dyn Term {
        self.g2.as_ref()
    }

    pub fn smoothness(&self) -> Smoothness {
        Smoothness {
            f: self.f.is_smooth(),
            g1: self.g1.is_smooth(),
            g2: self.g2.is_smooth(),
        }
    }

    pub fn check_point(&self, x: ArrayView1<f64>) -> Result<()> {
        check_dim(self.dim, x.len())
    }

    /// `f(x) + g1(x) − g2(x)`; `+∞` outside `dom g1`.
    pub fn evaluate_energy(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.energy(x))
    }

    /// Unchecked variant of [`evaluate_energy`](Self::evaluate_energy) for hot loops.
    pub fn energy(&self, x: ArrayView1<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.f.value(x) + self.g1.value(x) - self.g2.value(x)
    }

    pub fn subgradient_g2(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_point(x)?;
        Ok(self.g2.subgradient(x))
    }

    pub fn grad_f(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.f.subgradient(x)
    }

    /// `∇E(x)` when every part is differentiable.
    pub fn energy_gradient(&self, x: ArrayView1<f64>) -> Option<Array1<f64>> {
        if !self.smoothness().energy_smooth() {
            return None;
        }
        let mut g = self.f.subgradient(x);
        g += &self.g1.subgradient(x);
        g -= &self.g2.subgradient(x);
        Some(g)
    }
}

/// The zero function.
#[derive(Clone, Debug)]
pub struct ZeroTerm {
    dim: usize,
}

impl ZeroTerm {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Term for ZeroTerm {
    fn name(&self) -> &str {
        "zero"
    }
    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }
    fn value(&self, _x: ArrayView1<f64>) -> f64 {
        0.0
    }
    fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        Array1::zeros(x.len())
    }
    fn is_smooth(&self) -> bool {
        true
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
    fn quadratic(&self) -> Option<Quadratic> {
        Some(Quadratic {
            hessian: Arc::new(SymOperator::scaled_identity(self.dim, 0.0)),
            linear: Array1::zeros(self.dim),
        })
    }
    fn prox_quadratic(&self, w: ArrayView1<f64>, c: ArrayView1<f64>) -> Option<Array1<f64>> {
        w.iter().all(|&wi| wi > 0.0).then(|| &c / &w)
    }
}

/// `½⟨x,Hx⟩ − ⟨q,x⟩ + c0` with `H` positive semidefinite.
#[derive(Clone, Debug)]
pub struct QuadraticTerm {
    name: String,
    hessian: Arc<SymOperator>,
    linear: Array1<f64>,
    offset: f64,
    strong_convexity: f64,
}

impl QuadraticTerm {
    pub fn new(hessian: Arc<SymOperator>, linear: Array1<f64>, offset: f64) -> Result<Self> {
        check_dim(hessian.dim(), linear.len())?;
        Ok(Self {
            name: "quadratic".into(),
            hessian,
            linear,
            offset,
            strong_convexity: 0.0,
        })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_strong_convexity(mut self, mu: f64) -> Self {
        self.strong_convexity = mu;
        self
    }

    pub fn hessian(&self) -> &Arc<SymOperator> {
        &self.hessian
    }
}

impl Term for QuadraticTerm {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> Option<usize> {
        Some(self.linear.len())
    }
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        0.5 * self.hessian.quad_form(x) - self.linear.dot(&x) + self.offset
    }
    fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.hessian.apply(x) - &self.linear
    }
    fn is_smooth(&self) -> bool {
        true
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(self.hessian.safe_largest_eigenvalue())
    }
    fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }
    fn quadratic(&self) -> Option<Quadratic> {
        Some(Quadratic {
            hessian: self.hessian.clone(),
            linear: self.linear.clone(),
        })
    }
    fn prox_quadratic(&self, w: ArrayView1<f64>, c: ArrayView1<f64>) -> Option<Array1<f64>> {
        let h = self.hessian.as_diagonal()?;
        let denom = &w + &h;
        if denom.iter().any(|&d| !(d > 0.0)) {
            return None;
        }
        Some((&c + &self.linear) / denom)
    }
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `μ‖x‖₁`.
#[derive(Clone, Debug)]
pub struct L1Norm {
    weight: f64,
    sigma: f64,
}

impl L1Norm {
    /// `sigma` is the upper modulus reported to the diagnostics; any positive
    /// value is admissible for the ℓ1 norm.
    pub fn new(weight: f64, sigma: f64) -> Result<Self> {
        if !(weight >= 0.0) || !(sigma > 0.0) {
            return Err(DcError::InvalidParameter(
                "l1 weight must be nonnegative and sigma positive".into(),
            ));
        }
        Ok(Self { weight, sigma })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

impl Term for L1Norm {
    fn name(&self) -> &str {
        "l1"
    }
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        self.weight * x.iter().map(|v| v.abs()).sum::<f64>()
    }
    fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        x.mapv(|v| self.weight * sign(v))
    }
    fn is_smooth(&self) -> bool {
        false
    }
    fn upper_modulus(&self) -> Option<f64> {
        Some(self.sigma)
    }
    fn prox_quadratic(&self, w: ArrayView1<f64>, c: ArrayView1<f64>) -> Option<Array1<f64>> {
        if w.iter().any(|&wi| !(wi > 0.0)) {
            return None;
        }
        let mut z = Array1::zeros(c.len());
        Zip::from(&mut z)
            .and(&w)
            .and(&c)
            .for_each(|z, &w, &c| *z = soft_threshold(c, self.weight) / w);
        Some(z)
    }
    fn min_norm_residual(&self, x: ArrayView1<f64>, base: ArrayView1<f64>) -> Array1<f64> {
        let mu = self.weight;
        let mut r = Array1::zeros(x.len());
        Zip::from(&mut r).and(&x).and(&base).for_each(|r, &x, &b| {
            *r = if x != 0.0 {
                b + mu * sign(x)
            } else {
                soft_threshold(b, mu)
            };
        });
        r
    }
    /// Sign of the anchor where it is nonzero, sign of the query elsewhere.
    fn anchored_subgradient(&self, anchor: ArrayView1<f64>, query: ArrayView1<f64>) -> Array1<f64> {
        let mut w = Array1::zeros(anchor.len());
        Zip::from(&mut w)
            .and(&anchor)
            .and(&query)
            .for_each(|w, &a, &q| {
                *w = self.weight * if a != 0.0 { sign(a) } else { sign(q) };
            });
        w
    }
}

/// `base(x) + (s/2)‖x‖²`.
#[derive(Debug)]
pub struct ProxRegularized {
    name: String,
    base: Box<dyn Term>,
    shift: f64,
}

impl ProxRegularized {
    pub fn new(base: Box<dyn Term>, shift: f64) -> Result<Self> {
        if !(shift >= 0.0) {
            return Err(DcError::InvalidParameter(
                "quadratic shift must be nonnegative".into(),
            ));
        }
        Ok(Self {
            name: format!("{}+shift", base.name()),
            base,
            shift,
        })
    }
}

impl Term for ProxRegularized {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> Option<usize> {
        self.base.dim()
    }
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        self.base.value(x) + 0.5 * self.shift * x.dot(&x)
    }
    fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut g = self.base.subgradient(x);
        g.scaled_add(self.shift, &x);
        g
    }
    fn is_smooth(&self) -> bool {
        self.base.is_smooth()
    }
    fn lipschitz(&self) -> Option<f64> {
        self.base.lipschitz().map(|l| l + self.shift)
    }
    fn strong_convexity(&self) -> f64 {
        self.base.strong_convexity() + self.shift
    }
    fn upper_modulus(&self) -> Option<f64> {
        self.base.upper_modulus().map(|s| s + self.shift)
    }
    fn quadratic(&self) -> Option<Quadratic> {
        let q = self.base.quadratic()?;
        let n = q.linear.len();
        let hessian = SymOperator::combination(vec![
            (1.0, q.hessian),
            (self.shift, Arc::new(SymOperator::scaled_identity(n, 1.0))),
        ])
        .ok()?;
        Some(Quadratic {
            hessian: Arc::new(hessian),
            linear: q.linear,
        })
    }
    fn prox_quadratic(&self, w: ArrayView1<f64>, c: ArrayView1<f64>) -> Option<Array1<f64>> {
        let shifted = w.mapv(|wi| wi + self.shift);
        self.base.prox_quadratic(shifted.view(), c)
    }
    fn min_norm_residual(&self, x: ArrayView1<f64>, base: ArrayView1<f64>) -> Array1<f64> {
        let mut b = base.to_owned();
        b.scaled_add(self.shift, &x);
        self.base.min_norm_residual(x, b.view())
    }
    fn anchored_subgradient(&self, anchor: ArrayView1<f64>, query: ArrayView1<f64>) -> Array1<f64> {
        let mut g = self.base.anchored_subgradient(anchor, query);
        g.scaled_add(self.shift, &anchor);
        g
    }
}
