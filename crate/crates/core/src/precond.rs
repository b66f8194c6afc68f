//! Per-iteration subproblems.
//!
//! Both algorithms reduce to one of two computations:
//!
//! * **linear**: when the part solved implicitly is quadratic with Hessian
//!   `Q`, the subproblem is the single preconditioned step
//!   `x̄ = y + 𝕄⁻¹ (ξ − ∇f(y) − ∇g1(y))` with `𝕄 = Q + P`;
//! * **prox**: otherwise `f` must be quadratic and `Q_f + P` diagonal (`W`),
//!   giving `x̄ = prox(W, W∘y − ∇f(y) + ξ)` through the `g1` oracle.
//!
//! `P` is the effective proximal metric: `M` for the implicit subproblem and
//! `L·M` for the linearized one. It is what the Lyapunov diagnostics measure.

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, DcError, Result};
use crate::model::DcProblem;
use crate::operator::{power_iteration, SymOperator, EIGEN_SAFETY};

/// Relative residual used when an "exact" solve is emulated with CG.
const EXACT_CG_RTOL: f64 = 1e-14;
const METRIC_CG_RTOL: f64 = 1e-13;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PreconditionerKind {
    /// `M = s·I`.
    IdentityScaled(f64),
    /// `M = λ̂I − Q` with `λ̂` a safe upper bound on `λ_max(Q)`.
    SpectralGap,
    /// A fixed number of (damped) Jacobi sweeps on the subproblem system.
    /// `damping = None` selects a damping that keeps the implied metric
    /// positive definite.
    Jacobi {
        sweeps: usize,
        #[serde(default)]
        damping: Option<f64>,
    },
    /// Inner conjugate gradients, stopped on successive iterates.
    Cg { tol: f64, max_inner: usize },
    /// Explicit `M`, solved by dense factorization.
    #[serde(skip)]
    Exact(Arc<SymOperator>),
}

impl PreconditionerKind {
    pub fn jacobi(sweeps: usize) -> Self {
        PreconditionerKind::Jacobi {
            sweeps,
            damping: None,
        }
    }
}

/// Which subproblem an algorithm solves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SubproblemForm {
    /// `argmin −⟨ξ,z⟩ + ½‖z−y‖²_M + f(z) + g1(z)`.
    Implicit,
    /// `argmin ⟨∇f(y)−ξ, z⟩ + (L/2)‖z−y‖²_M + g1(z)`.
    Linearized { lipschitz: f64 },
}

impl SubproblemForm {
    /// Factor between `M` and the effective metric `P`.
    pub fn scale(self) -> f64 {
        match self {
            SubproblemForm::Implicit => 1.0,
            SubproblemForm::Linearized { lipschitz } => lipschitz,
        }
    }
}

/// Inner-solver bookkeeping for one subproblem.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub inner_iterations: usize,
    pub inner_residual: Option<f64>,
    pub inner_converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CgStop {
    /// `‖z^{l+1} − z^l‖ < tol`.
    SuccessiveIterates(f64),
    /// `‖b − Az‖ ≤ tol·‖b‖`.
    RelativeResidual(f64),
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Array1<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Conjugate gradients for `A z = b` from `z = 0`.
pub fn conjugate_gradient<F>(
    mut apply: F,
    b: ArrayView1<f64>,
    stop: CgStop,
    max_iter: usize,
) -> CgOutcome
where
    F: FnMut(ArrayView1<f64>) -> Array1<f64>,
{
    let n = b.len();
    let mut x = Array1::zeros(n);
    let mut r = b.to_owned();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let b_norm = rr.sqrt();
    let residual_target = match stop {
        CgStop::RelativeResidual(tol) => tol * b_norm,
        CgStop::SuccessiveIterates(_) => 0.0,
    };
    if b_norm == 0.0 {
        return CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let ap = apply(p.view());
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        let rr_next = r.dot(&r);
        let done = match stop {
            CgStop::SuccessiveIterates(tol) => alpha.abs() * p.dot(&p).sqrt() < tol,
            CgStop::RelativeResidual(_) => rr_next.sqrt() <= residual_target,
        };
        if done || rr_next == 0.0 {
            converged = true;
            break;
        }
        let beta = rr_next / rr;
        rr = rr_next;
        Zip::from(&mut p)
            .and(&r)
            .for_each(|p, &r| *p = r + beta * *p);
    }
    let res = &b - &apply(x.view());
    let residual = res.dot(&res).sqrt();
    CgOutcome {
        x,
        iterations,
        residual,
        converged,
    }
}

#[derive(Debug)]
enum LinearSolver {
    /// `𝕄 = s·I`.
    Scalar(f64),
    /// `𝕄` diagonal.
    Diagonal(Array1<f64>),
    Jacobi {
        sweeps: usize,
        omega: f64,
        inv_diag: Array1<f64>,
    },
    Cg {
        op: Arc<SymOperator>,
        stop: CgStop,
        max_inner: usize,
    },
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
}

/// `⟨v, P v⟩` oracles.
#[derive(Debug)]
enum Metric {
    /// `P = diag(shift) − minus`.
    Shifted {
        shift: Array1<f64>,
        minus: Option<Arc<SymOperator>>,
    },
    /// `P = scale·M`.
    Scaled(f64, Arc<SymOperator>),
    /// `P = σ₀I + (𝕄_k − A)` for `k` damped Jacobi sweeps on `A`.
    Jacobi(JacobiMetric),
}

#[derive(Debug)]
struct JacobiMetric {
    base_shift: f64,
    system: Arc<SymOperator>,
    sqrt_diag: Array1<f64>,
    omega: f64,
    sweeps: usize,
}

impl JacobiMetric {
    /// `S u = D^{-1/2} A D^{-1/2} u`.
    fn apply_s(&self, u: ArrayView1<f64>) -> Array1<f64> {
        let v = &u / &self.sqrt_diag;
        self.system.apply(v.view()) / &self.sqrt_diag
    }

    fn apply_q(&self, u: ArrayView1<f64>) -> Array1<f64> {
        let mut out = u.to_owned();
        out.scaled_add(-self.omega, &self.apply_s(u));
        out
    }

    /// `p(S) u = Σ_{j<k} qʲ u`.
    fn apply_p(&self, u: ArrayView1<f64>) -> Array1<f64> {
        let mut acc = u.to_owned();
        for _ in 1..self.sweeps {
            acc = self.apply_q(acc.view()) + u;
        }
        acc
    }

    fn quad_form(&self, v: ArrayView1<f64>) -> f64 {
        let u = &v * &self.sqrt_diag;
        let mut qk = u.clone();
        for _ in 0..self.sweeps {
            qk = self.apply_q(qk.view());
        }
        let z = conjugate_gradient(
            |w| self.apply_p(w),
            u.view(),
            CgStop::RelativeResidual(METRIC_CG_RTOL),
            500,
        );
        self.base_shift * v.dot(&v) + qk.dot(&z.x) / self.omega
    }
}

/// `φ(s) = qᵏ / (ω Σ_{j<k} qʲ)` with `q = 1 − ωs`.
fn jacobi_phi(s: f64, omega: f64, sweeps: usize) -> f64 {
    let q = 1.0 - omega * s;
    let p: f64 = (0..sweeps).map(|j| q.powi(j as i32)).sum();
    q.powi(sweeps as i32) / (omega * p)
}

impl Metric {
    fn quad_form(&self, v: ArrayView1<f64>) -> f64 {
        match self {
            Metric::Shifted { shift, minus } => {
                let mut s = 0.0;
                Zip::from(shift).and(&v).for_each(|&d, &x| s += d * x * x);
                match minus {
                    Some(q) => s - q.quad_form(v),
                    None => s,
                }
            }
            Metric::Scaled(scale, m) => scale * m.quad_form(v),
            Metric::Jacobi(j) => j.quad_form(v),
        }
    }
}

/// The preconditioned step `z = y + 𝕄⁻¹(b − A y)` for a fixed system.
#[derive(Debug)]
pub struct LinearStep {
    /// `Q + σ₀ I`, the matrix Jacobi and CG iterate on.
    system: Arc<SymOperator>,
    solver: LinearSolver,
    metric: Metric,
    mu_min: f64,
}

impl LinearStep {
    /// `q` is the Hessian of the implicitly treated part, `base_shift` the
    /// metric already fixed by the algorithm (`L` for the linearized form)
    /// and `scale` the factor between `M` and `P`.
    fn new(
        q: Arc<SymOperator>,
        base_shift: f64,
        scale: f64,
        kind: &PreconditionerKind,
    ) -> Result<Self> {
        let n = q.dim();
        let system = if base_shift > 0.0 {
            Arc::new(SymOperator::combination(vec![
                (1.0, q.clone()),
                (base_shift, Arc::new(SymOperator::scaled_identity(n, 1.0))),
            ])?)
        } else {
            q.clone()
        };
        let uniform = |s: f64| Array1::from_elem(n, s);
        let step = match kind {
            PreconditionerKind::IdentityScaled(s) => {
                if !(*s >= 0.0) {
                    return Err(DcError::Configuration(
                        "identity scale must be nonnegative".into(),
                    ));
                }
                let p = scale * s;
                let solver = match q.as_diagonal() {
                    Some(d) => LinearSolver::Diagonal(d + p),
                    None => LinearSolver::Cg {
                        op: Arc::new(SymOperator::combination(vec![
                            (1.0, q.clone()),
                            (p, Arc::new(SymOperator::scaled_identity(n, 1.0))),
                        ])?),
                        stop: CgStop::RelativeResidual(EXACT_CG_RTOL),
                        max_inner: 10 * n + 100,
                    },
                };
                Self {
                    system,
                    solver,
                    metric: Metric::Shifted {
                        shift: uniform(p),
                        minus: None,
                    },
                    mu_min: p,
                }
            }
            PreconditionerKind::SpectralGap => {
                let lambda_hat = system.safe_largest_eigenvalue();
                let mu_min = lambda_hat - q.largest_eigenvalue();
                Self {
                    system,
                    solver: LinearSolver::Scalar(lambda_hat),
                    metric: Metric::Shifted {
                        shift: uniform(lambda_hat),
                        minus: Some(q),
                    },
                    mu_min,
                }
            }
            PreconditionerKind::Jacobi { sweeps, damping } => {
                if *sweeps == 0 {
                    return Err(DcError::Configuration(
                        "Jacobi needs at least one sweep".into(),
                    ));
                }
                let diag = system.diagonal();
                if diag.iter().any(|&d| !(d > 0.0)) {
                    return Err(DcError::Configuration(
                        "Jacobi requires a positive diagonal".into(),
                    ));
                }
                match system.off_diagonal_abs_row_sums() {
                    Some(off) if Zip::from(&diag).and(&off).all(|&d, &o| d > o) => {}
                    Some(_) => warn!("Jacobi system is not strictly diagonally dominant"),
                    None => warn!("diagonal dominance of the Jacobi system was not checked"),
                }
                let sqrt_diag = diag.mapv(f64::sqrt);
                let s_max = EIGEN_SAFETY
                    * power_iteration(n, |x, out| {
                        let v: Vec<f64> = x.iter().zip(&sqrt_diag).map(|(x, d)| x / d).collect();
                        system.apply_into(&v, out);
                        out.iter_mut().zip(&sqrt_diag).for_each(|(o, d)| *o /= d);
                    });
                let omega = damping.unwrap_or_else(|| (2.0 / 3.0 / s_max).min(1.0));
                if !(omega > 0.0) {
                    return Err(DcError::Configuration(
                        "Jacobi damping must be positive".into(),
                    ));
                }
                let phi = jacobi_phi(s_max, omega, *sweeps);
                let d_min = diag.iter().copied().fold(f64::INFINITY, f64::min);
                let d_max = diag.iter().copied().fold(0.0, f64::max);
                let mu_min = base_shift + (d_min * phi).min(d_max * phi);
                if mu_min <= 0.0 {
                    warn!("Jacobi damping {omega} yields an indefinite implied metric");
                }
                Self {
                    system: system.clone(),
                    solver: LinearSolver::Jacobi {
                        sweeps: *sweeps,
                        omega,
                        inv_diag: diag.mapv(|d| 1.0 / d),
                    },
                    metric: Metric::Jacobi(JacobiMetric {
                        base_shift,
                        system,
                        sqrt_diag,
                        omega,
                        sweeps: *sweeps,
                    }),
                    mu_min,
                }
            }
            PreconditionerKind::Cg { tol, max_inner } => {
                if !(*tol > 0.0) || *max_inner == 0 {
                    return Err(DcError::Configuration(
                        "CG needs tol > 0 and max_inner ≥ 1".into(),
                    ));
                }
                Self {
                    system: system.clone(),
                    solver: LinearSolver::Cg {
                        op: system,
                        stop: CgStop::SuccessiveIterates(*tol),
                        max_inner: *max_inner,
                    },
                    metric: Metric::Shifted {
                        shift: uniform(base_shift),
                        minus: None,
                    },
                    mu_min: base_shift,
                }
            }
            PreconditionerKind::Exact(m) => {
                check_dim(n, m.dim())?;
                let md = m.to_dense();
                let qd = q.to_dense();
                let total = DMatrix::from_fn(n, n, |i, j| qd[[i, j]] + scale * md[[i, j]]);
                let chol = total.cholesky().ok_or_else(|| {
                    DcError::Configuration("Q + M is not positive definite".into())
                })?;
                let eig = DMatrix::from_fn(n, n, |i, j| md[[i, j]]).symmetric_eigenvalues();
                let mu_min = scale * eig.iter().copied().fold(f64::INFINITY, f64::min);
                Self {
                    system,
                    solver: LinearSolver::Cholesky(chol),
                    metric: Metric::Scaled(scale, m.clone()),
                    mu_min,
                }
            }
        };
        Ok(step)
    }

    /// `𝕄⁻¹ r`.
    fn solve(&self, r: ArrayView1<f64>) -> (Array1<f64>, StepInfo) {
        match &self.solver {
            LinearSolver::Scalar(s) => (r.mapv(|v| v / s), exact_info()),
            LinearSolver::Diagonal(d) => (&r / d, exact_info()),
            LinearSolver::Jacobi {
                sweeps,
                omega,
                inv_diag,
            } => {
                let mut z = Zip::from(&r)
                    .and(inv_diag)
                    .map_collect(|&r, &d| omega * d * r);
                for _ in 1..*sweeps {
                    let az = self.system.apply(z.view());
                    Zip::from(&mut z)
                        .and(&r)
                        .and(&az)
                        .and(inv_diag)
                        .for_each(|z, &r, &az, &d| *z += omega * d * (r - az));
                }
                let info = StepInfo {
                    inner_iterations: *sweeps,
                    inner_residual: None,
                    inner_converged: true,
                };
                (z, info)
            }
            LinearSolver::Cg {
                op,
                stop,
                max_inner,
            } => {
                let out = conjugate_gradient(|v| op.apply(v), r, *stop, *max_inner);
                let info = StepInfo {
                    inner_iterations: out.iterations,
                    inner_residual: Some(out.residual),
                    inner_converged: out.converged,
                };
                (out.x, info)
            }
            LinearSolver::Cholesky(chol) => {
                let rhs = DVector::from_iterator(r.len(), r.iter().copied());
                let z = chol.solve(&rhs);
                (Array1::from_iter(z.iter().copied()), exact_info())
            }
        }
    }
}

fn exact_info() -> StepInfo {
    StepInfo {
        inner_iterations: 0,
        inner_residual: None,
        inner_converged: true,
    }
}

/// `y + 𝕄⁻¹(b − A y)` with `𝕄 = A + M` for the given preconditioner.
pub fn preconditioned_step(
    a: &Arc<SymOperator>,
    b: ArrayView1<f64>,
    y: ArrayView1<f64>,
    kind: &PreconditionerKind,
) -> Result<(Array1<f64>, StepInfo)> {
    check_dim(a.dim(), b.len())?;
    check_dim(a.dim(), y.len())?;
    let step = LinearStep::new(a.clone(), 0.0, 1.0, kind)?;
    let r = &b - &a.apply(y);
    let (delta, info) = step.solve(r.view());
    Ok((delta + y, info))
}

#[derive(Debug)]
enum Path {
    Linear(LinearStep),
    Prox {
        weights: Array1<f64>,
        metric: Metric,
        mu_min: f64,
    },
}

/// A subproblem solver prepared once per run.
#[derive(Debug)]
pub struct Subproblem {
    form: SubproblemForm,
    path: Path,
}

impl Subproblem {
    pub fn prepare(
        problem: &DcProblem,
        form: SubproblemForm,
        kind: &PreconditionerKind,
    ) -> Result<Self> {
        let n = problem.dim();
        let f_quad = problem.f().quadratic();
        let g1_quad = problem.g1().quadratic();
        let path = match form {
            SubproblemForm::Implicit => match (&f_quad, &g1_quad) {
                (Some(fq), Some(gq)) => {
                    let q = fq.sum(gq)?;
                    Path::Linear(LinearStep::new(q.hessian, 0.0, 1.0, kind)?)
                }
                (Some(fq), None) => implicit_prox_path(n, &fq.hessian, kind)?,
                (None, _) => {
                    return Err(DcError::Configuration(
                        "the implicit subproblem needs a quadratic f".into(),
                    ))
                }
            },
            SubproblemForm::Linearized { lipschitz } => {
                if !(lipschitz > 0.0) {
                    return Err(DcError::Configuration(
                        "Lipschitz constant must be positive".into(),
                    ));
                }
                match &g1_quad {
                    Some(gq) => Path::Linear(LinearStep::new(
                        gq.hessian.clone(),
                        lipschitz,
                        lipschitz,
                        kind,
                    )?),
                    None => linearized_prox_path(n, lipschitz, kind)?,
                }
            }
        };
        if let Path::Prox { weights, .. } = &path {
            let probe = Array1::zeros(n);
            if problem
                .g1()
                .prox_quadratic(weights.view(), probe.view())
                .is_none()
            {
                return Err(DcError::Configuration(format!(
                    "{} has no closed-form prox under the required diagonal metric",
                    problem.g1().name()
                )));
            }
        }
        Ok(Self { form, path })
    }

    pub fn form(&self) -> SubproblemForm {
        self.form
    }

    /// `x̄` for anchor `y` and `ξ ∈ ∂g2(x)`.
    pub fn step(
        &self,
        problem: &DcProblem,
        y: ArrayView1<f64>,
        xi: ArrayView1<f64>,
    ) -> (Array1<f64>, StepInfo) {
        match &self.path {
            Path::Linear(step) => {
                let mut r = xi.to_owned();
                r -= &problem.f().subgradient(y);
                r -= &problem.g1().subgradient(y);
                let (delta, info) = step.solve(r.view());
                (delta + y, info)
            }
            Path::Prox { weights, .. } => {
                let grad = problem.grad_f(y);
                let c = Zip::from(weights)
                    .and(&y)
                    .and(&grad)
                    .and(&xi)
                    .map_collect(|&w, &y, &g, &xi| w * y - g + xi);
                let x = problem
                    .g1()
                    .prox_quadratic(weights.view(), c.view())
                    .expect("prox availability is checked at preparation");
                (x, exact_info())
            }
        }
    }

    /// `⟨v, P v⟩` for the effective metric `P`.
    pub fn metric_sq(&self, v: ArrayView1<f64>) -> f64 {
        match &self.path {
            Path::Linear(step) => step.metric.quad_form(v),
            Path::Prox { metric, .. } => metric.quad_form(v),
        }
    }

    /// Lower bound on the smallest eigenvalue of `P`.
    pub fn mu_min(&self) -> f64 {
        match &self.path {
            Path::Linear(step) => step.mu_min,
            Path::Prox { mu_min, .. } => *mu_min,
        }
    }
}

fn implicit_prox_path(n: usize, qf: &Arc<SymOperator>, kind: &PreconditionerKind) -> Result<Path> {
    match kind {
        PreconditionerKind::SpectralGap => {
            let lambda_hat = qf.safe_largest_eigenvalue();
            Ok(Path::Prox {
                weights: Array1::from_elem(n, lambda_hat),
                metric: Metric::Shifted {
                    shift: Array1::from_elem(n, lambda_hat),
                    minus: Some(qf.clone()),
                },
                mu_min: lambda_hat - qf.largest_eigenvalue(),
            })
        }
        PreconditionerKind::IdentityScaled(s) => {
            let d = qf.as_diagonal().ok_or_else(|| {
                DcError::Configuration("identity metric needs a diagonal Hessian of f here".into())
            })?;
            Ok(Path::Prox {
                weights: d + *s,
                metric: Metric::Shifted {
                    shift: Array1::from_elem(n, *s),
                    minus: None,
                },
                mu_min: *s,
            })
        }
        PreconditionerKind::Exact(m) => {
            check_dim(n, m.dim())?;
            let (Some(dq), Some(dm)) = (qf.as_diagonal(), m.as_diagonal()) else {
                return Err(DcError::Configuration(
                    "prox subproblem needs Q_f + M diagonal".into(),
                ));
            };
            let mu_min = dm.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(Path::Prox {
                weights: dq + &dm,
                metric: Metric::Scaled(1.0, m.clone()),
                mu_min,
            })
        }
        PreconditionerKind::Jacobi { .. } | PreconditionerKind::Cg { .. } => Err(
            DcError::Configuration("iterative inner solvers need a quadratic f + g1".into()),
        ),
    }
}

fn linearized_prox_path(n: usize, lipschitz: f64, kind: &PreconditionerKind) -> Result<Path> {
    match kind {
        PreconditionerKind::IdentityScaled(s) => {
            let w = lipschitz * s;
            Ok(Path::Prox {
                weights: Array1::from_elem(n, w),
                metric: Metric::Shifted {
                    shift: Array1::from_elem(n, w),
                    minus: None,
                },
                mu_min: w,
            })
        }
        PreconditionerKind::Exact(m) => {
            check_dim(n, m.dim())?;
            let dm = m.as_diagonal().ok_or_else(|| {
                DcError::Configuration("linearized prox subproblem needs a diagonal M".into())
            })?;
            let mu_min = lipschitz * dm.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(Path::Prox {
                weights: dm * lipschitz,
                metric: Metric::Scaled(lipschitz, m.clone()),
                mu_min,
            })
        }
        _ => Err(DcError::Configuration(
            "linearized prox subproblem supports only diagonal metrics".into(),
        )),
    }
}
