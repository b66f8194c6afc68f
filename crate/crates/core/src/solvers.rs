//! Outer loops for the line-search-extrapolated methods and their baselines.
//!
//! Every algorithm is the same iteration with different switches:
//!
//! ```text
//! ξⁿ ∈ ∂g2(xⁿ),  yⁿ = xⁿ + βₙ(xⁿ − xⁿ⁻¹),  x̄ⁿ = subproblem(yⁿ, ξⁿ),  dⁿ = x̄ⁿ − xⁿ
//! xⁿ⁺¹ = x̄ⁿ + λₙdⁿ  (λₙ from the line search, 0 without one)
//! ```

use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::{Array1, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{criticality_residual, lyapunov_a, lyapunov_h};
use crate::error::{check_dim, DcError, Result};
use crate::graphgl::dice;
use crate::linesearch::{
    adaptive_restart_signal, c_lambda, fista_beta_step, lsde_gap, lsde_update, nonmonotone_search,
    FistaState, LineSearchParams, LineSearchResult, LsdeParams, RestartPolicy,
};
use crate::model::DcProblem;
use crate::operator::norm;
use crate::precond::{PreconditionerKind, StepInfo, Subproblem, SubproblemForm};

/// Fixed restart period of the restarted FISTA baselines.
pub const FIXED_RESTART_PERIOD: usize = 200;

/// Sufficient-decrease coefficient of the monotone boosted-DCA search.
pub const BOOSTED_ETA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Implicit subproblem, non-monotone search, LSDE.
    NpdcaeNls,
    /// Linearized subproblem, non-monotone search, LSDE.
    PdcaeNls,
    Dca,
    /// DCA step followed by a monotone search along `d`.
    BdcaLs,
    Pdca,
    PdcaNls,
    /// FISTA momentum with fixed and adaptive restart.
    Pdcae,
    PdcaeNoRestart,
    PdcaeFixed,
    PdcaeAdaptive,
    /// Implicit subproblem with FISTA momentum, fixed and adaptive restart.
    Npdcae,
}

impl Algorithm {
    pub const ALL: [Algorithm; 11] = [
        Algorithm::NpdcaeNls,
        Algorithm::PdcaeNls,
        Algorithm::Dca,
        Algorithm::BdcaLs,
        Algorithm::Pdca,
        Algorithm::PdcaNls,
        Algorithm::Pdcae,
        Algorithm::PdcaeNoRestart,
        Algorithm::PdcaeFixed,
        Algorithm::PdcaeAdaptive,
        Algorithm::Npdcae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::NpdcaeNls => "npdcae_nls",
            Algorithm::PdcaeNls => "pdcae_nls",
            Algorithm::Dca => "dca",
            Algorithm::BdcaLs => "bdca_ls",
            Algorithm::Pdca => "pdca",
            Algorithm::PdcaNls => "pdca_nls",
            Algorithm::Pdcae => "pdcae",
            Algorithm::PdcaeNoRestart => "pdcae_no_restart",
            Algorithm::PdcaeFixed => "pdcae_fixed",
            Algorithm::PdcaeAdaptive => "pdcae_adaptive",
            Algorithm::Npdcae => "npdcae",
        }
    }

    pub fn implicit(self) -> bool {
        matches!(
            self,
            Algorithm::NpdcaeNls | Algorithm::Dca | Algorithm::BdcaLs | Algorithm::Npdcae
        )
    }

    /// Whether the Lyapunov descent guarantee applies.
    pub fn has_descent_guarantee(self) -> bool {
        !matches!(
            self.extrapolation(LsdeParams::default()),
            Extrapolation::Fista(_)
        )
    }

    fn extrapolation(self, lsde: LsdeParams) -> Extrapolation {
        let both = RestartPolicy {
            fixed: Some(FIXED_RESTART_PERIOD),
            adaptive: true,
        };
        match self {
            Algorithm::NpdcaeNls | Algorithm::PdcaeNls => Extrapolation::Lsde(lsde),
            Algorithm::Dca | Algorithm::BdcaLs | Algorithm::Pdca | Algorithm::PdcaNls => {
                Extrapolation::None
            }
            Algorithm::Pdcae | Algorithm::Npdcae => Extrapolation::Fista(both),
            Algorithm::PdcaeNoRestart => Extrapolation::Fista(RestartPolicy::NONE),
            Algorithm::PdcaeFixed => Extrapolation::Fista(RestartPolicy {
                fixed: Some(FIXED_RESTART_PERIOD),
                adaptive: false,
            }),
            Algorithm::PdcaeAdaptive => Extrapolation::Fista(RestartPolicy {
                fixed: None,
                adaptive: true,
            }),
        }
    }

    /// Standard configuration for this algorithm under a parameter profile.
    pub fn config(
        self,
        line_search: LineSearchParams,
        lsde: LsdeParams,
        preconditioner: PreconditionerKind,
        termination: TerminationRule,
        max_iter: usize,
    ) -> SolverConfig {
        let search = match self {
            Algorithm::NpdcaeNls | Algorithm::PdcaeNls | Algorithm::PdcaNls => Some(line_search),
            Algorithm::BdcaLs => Some(LineSearchParams {
                n_max: line_search.n_max,
                ..LineSearchParams::monotone(BOOSTED_ETA)
            }),
            _ => None,
        };
        SolverConfig {
            form: if self.implicit() {
                FormChoice::Implicit
            } else {
                FormChoice::Linearized
            },
            line_search: search,
            extrapolation: self.extrapolation(lsde),
            preconditioner,
            termination,
            max_iter,
            trace: TraceLevel::Light,
            lipschitz: None,
            x0: None,
            record_iterates: false,
            reference: None,
            ladder: Vec::new(),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = DcError;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| DcError::Configuration(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormChoice {
    Implicit,
    Linearized,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extrapolation {
    None,
    Lsde(LsdeParams),
    Fista(RestartPolicy),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TerminationRule {
    /// `‖xⁿ − xⁿ⁻¹‖ / max(1, ‖xⁿ‖) < ε`.
    RelChange(f64),
    /// `‖xⁿ − xⁿ⁻¹‖ ≤ ε`.
    StepNorm(f64),
    /// `‖∇E(xⁿ)‖ ≤ ε`; smooth energies only.
    GradNorm(f64),
    /// DICE of `{x > 0}` against the truth reaches the threshold.
    DiceBound {
        threshold: f64,
        truth: Arc<Vec<bool>>,
    },
}

impl TerminationRule {
    pub fn tolerance(&self) -> f64 {
        match self {
            TerminationRule::RelChange(e)
            | TerminationRule::StepNorm(e)
            | TerminationRule::GradNorm(e) => *e,
            TerminationRule::DiceBound { threshold, .. } => *threshold,
        }
    }

    /// Same rule with another tolerance.
    pub fn with_tolerance(&self, eps: f64) -> Self {
        match self {
            TerminationRule::RelChange(_) => TerminationRule::RelChange(eps),
            TerminationRule::StepNorm(_) => TerminationRule::StepNorm(eps),
            TerminationRule::GradNorm(_) => TerminationRule::GradNorm(eps),
            TerminationRule::DiceBound { truth, .. } => TerminationRule::DiceBound {
                threshold: eps,
                truth: truth.clone(),
            },
        }
    }

    fn validate(&self, problem: &DcProblem) -> Result<()> {
        match self {
            TerminationRule::RelChange(e)
            | TerminationRule::StepNorm(e)
            | TerminationRule::GradNorm(e) => {
                if !(*e > 0.0) {
                    return Err(DcError::Configuration(
                        "termination tolerance must be positive".into(),
                    ));
                }
            }
            TerminationRule::DiceBound { threshold, truth } => {
                check_dim(problem.dim(), truth.len())?;
                if !(*threshold > 0.0 && *threshold <= 1.0) {
                    return Err(DcError::Configuration(
                        "DICE threshold must lie in (0, 1]".into(),
                    ));
                }
            }
        }
        if matches!(self, TerminationRule::GradNorm(_)) && !problem.smoothness().energy_smooth() {
            return Err(DcError::Configuration(
                "gradient-norm termination needs a differentiable energy".into(),
            ));
        }
        Ok(())
    }

    /// The quantity compared against the tolerance, and whether it passes.
    fn measure(&self, state: &IterateState, problem: &DcProblem) -> (f64, bool) {
        match self {
            TerminationRule::RelChange(eps) => {
                let v = state.step_norm / norm(state.x.view()).max(1.0);
                (v, v < *eps)
            }
            TerminationRule::StepNorm(eps) => (state.step_norm, state.step_norm <= *eps),
            TerminationRule::GradNorm(eps) => {
                let g = problem
                    .energy_gradient(state.x.view())
                    .expect("validated as smooth");
                let v = norm(g.view());
                (v, v <= *eps)
            }
            TerminationRule::DiceBound { threshold, truth } => {
                let seg: Vec<bool> = state.x.iter().map(|&v| v > 0.0).collect();
                let v = dice(&seg, truth).expect("validated shape");
                (v, v >= *threshold)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    Off,
    /// Iteration scalars that come for free.
    #[default]
    Light,
    /// Adds the Lyapunov values and the criticality residual.
    Full,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub form: FormChoice,
    pub line_search: Option<LineSearchParams>,
    pub extrapolation: Extrapolation,
    pub preconditioner: PreconditionerKind,
    pub termination: TerminationRule,
    pub max_iter: usize,
    pub trace: TraceLevel,
    /// Overrides the Lipschitz constant of `∇f` for the linearized form.
    pub lipschitz: Option<f64>,
    pub x0: Option<Array1<f64>>,
    pub record_iterates: bool,
    /// Point whose distance to every iterate is traced.
    pub reference: Option<Array1<f64>>,
    /// Additional tolerances whose first crossing is reported.
    pub ladder: Vec<f64>,
}

impl SolverConfig {
    pub fn validate(&self, problem: &DcProblem) -> Result<()> {
        if self.max_iter == 0 {
            return Err(DcError::Configuration("max_iter must be at least 1".into()));
        }
        if let Some(ls) = &self.line_search {
            ls.validate()?;
        }
        if let Extrapolation::Lsde(p) = &self.extrapolation {
            p.validate()?;
        }
        for v in [&self.x0, &self.reference].into_iter().flatten() {
            check_dim(problem.dim(), v.len())?;
        }
        if self.ladder.iter().any(|e| !(*e > 0.0)) {
            return Err(DcError::Configuration(
                "ladder tolerances must be positive".into(),
            ));
        }
        self.termination.validate(problem)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Converged,
    MaxIter,
    StationaryDZero,
    NanAbort,
}

/// One outer iteration's working set, after the update.
#[derive(Clone, Debug)]
pub struct IterateState {
    pub n: usize,
    /// `xⁿ⁺¹`.
    pub x: Array1<f64>,
    /// `xⁿ`.
    pub x_prev: Array1<f64>,
    pub y: Array1<f64>,
    pub x_bar: Array1<f64>,
    pub d: Array1<f64>,
    pub xi: Array1<f64>,
    pub lambda: f64,
    pub beta: f64,
    pub trials: usize,
    /// `1` if `λₙ > 0`.
    pub accepted: bool,
    pub step_norm: f64,
}

/// `check_termination` for an externally driven loop.
pub fn check_termination(
    rule: &TerminationRule,
    state: &IterateState,
    problem: &DcProblem,
) -> Result<bool> {
    rule.validate(problem)?;
    Ok(rule.measure(state, problem).1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub n: usize,
    /// `E(xⁿ⁺¹)`.
    pub energy: f64,
    /// `E(x̄ⁿ)`.
    pub energy_bar: f64,
    pub lyapunov_a: Option<f64>,
    pub lyapunov_h: Option<f64>,
    pub d_norm: f64,
    /// `‖xⁿ⁺¹ − xⁿ‖`.
    pub step_norm: f64,
    pub lambda: f64,
    /// `βₙ`, used to form `yⁿ`.
    pub beta: f64,
    pub beta_next: f64,
    pub trials: usize,
    pub accepted: bool,
    pub nu: f64,
    /// `1/(1+λₙ)² − βₙ₊₁²`.
    pub lsde_gap: f64,
    pub crit_residual: Option<f64>,
    /// Value the termination rule compared.
    pub criterion: f64,
    /// `‖xⁿ⁺¹ − reference‖`.
    pub dist_ref: Option<f64>,
    pub inner_iterations: usize,
    pub inner_residual: Option<f64>,
    pub inner_converged: bool,
    pub wall_ms: f64,
}

/// Iteration at which a looser tolerance was first met.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub tolerance: f64,
    pub iterations: Option<usize>,
    pub wall_time_s: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub x: Array1<f64>,
    pub iterations: usize,
    pub status: Status,
    pub wall_time: Duration,
    /// `E(x⁰)`.
    pub initial_energy: f64,
    pub final_energy: f64,
    pub trace: Vec<TraceRow>,
    pub iterates: Vec<Array1<f64>>,
    pub crossings: Vec<Crossing>,
    /// First `n` past which the search budget is dominated.
    pub n0: usize,
    pub c_lambda: Option<f64>,
    /// Lower bound on the smallest eigenvalue of the proximal metric `P`.
    pub mu_min: f64,
    pub nan_iteration: Option<usize>,
    pub message: Option<String>,
}

impl SolveReport {
    /// `C₁ = C_λ μ_min / 2`.
    pub fn descent_constant(&self) -> Option<f64> {
        self.c_lambda.map(|c| 0.5 * c * self.mu_min)
    }
}

/// Implicit subproblem with the non-monotone search and LSDE.
pub fn solve_npdcae_nls(problem: &DcProblem, config: &SolverConfig) -> Result<SolveReport> {
    if config.form != FormChoice::Implicit {
        return Err(DcError::Configuration(
            "npdcae_nls solves the implicit subproblem".into(),
        ));
    }
    solve(problem, config)
}

/// Linearized subproblem with the non-monotone search and LSDE.
pub fn solve_pdcae_nls(problem: &DcProblem, config: &SolverConfig) -> Result<SolveReport> {
    if config.form != FormChoice::Linearized {
        return Err(DcError::Configuration(
            "pdcae_nls solves the linearized subproblem".into(),
        ));
    }
    solve(problem, config)
}

/// Any of the baseline methods, as described by `config`.
pub fn solve_baseline(problem: &DcProblem, config: &SolverConfig) -> Result<SolveReport> {
    solve(problem, config)
}

/// The generic outer loop.
///
/// Configuration errors are returned as `Err`; a NaN energy ends the run with
/// [`Status::NanAbort`].
pub fn solve(problem: &DcProblem, config: &SolverConfig) -> Result<SolveReport> {
    config.validate(problem)?;
    let form = match config.form {
        FormChoice::Implicit => SubproblemForm::Implicit,
        FormChoice::Linearized => {
            let lipschitz = config
                .lipschitz
                .or_else(|| problem.f().lipschitz())
                .ok_or_else(|| DcError::Configuration("f has no Lipschitz constant".into()))?;
            SubproblemForm::Linearized { lipschitz }
        }
    };
    let sub = Subproblem::prepare(problem, form, &config.preconditioner)?;
    let n0 = config
        .line_search
        .as_ref()
        .map_or(0, LineSearchParams::monotone_threshold);
    let c_lam = match (&config.extrapolation, &config.line_search) {
        (Extrapolation::Lsde(p), Some(ls)) => Some(c_lambda(p, ls.lambda_max)),
        (Extrapolation::None, Some(ls)) => Some(0.5 / (1.0 + ls.lambda_max).powi(2)),
        (Extrapolation::None, None) => Some(0.5),
        _ => None,
    };
    let mut run = Run {
        problem,
        config,
        sub,
        start: Instant::now(),
        trace: Vec::new(),
        iterates: Vec::new(),
        crossings: config
            .ladder
            .iter()
            .map(|&tolerance| Crossing {
                tolerance,
                iterations: None,
                wall_time_s: None,
            })
            .collect(),
        diagnostics: Duration::ZERO,
    };
    let outcome = run.iterate();
    let wall_time = run.solver_time();
    let (x, iterations, status, nan_iteration, final_energy) = outcome;
    if config.record_iterates && run.iterates.is_empty() {
        run.iterates.push(x.clone());
    }
    let initial_energy = match &config.x0 {
        Some(x0) => problem.energy(x0.view()),
        None => problem.energy(Array1::zeros(problem.dim()).view()),
    };
    Ok(SolveReport {
        initial_energy,
        final_energy,
        x,
        iterations,
        status,
        wall_time,
        trace: run.trace,
        iterates: run.iterates,
        crossings: run.crossings,
        n0,
        c_lambda: c_lam,
        mu_min: run.sub.mu_min(),
        nan_iteration,
        message: nan_iteration.map(|n| DcError::NanEnergy { iteration: n }.to_string()),
    })
}

struct Run<'a> {
    problem: &'a DcProblem,
    config: &'a SolverConfig,
    sub: Subproblem,
    start: Instant,
    trace: Vec<TraceRow>,
    iterates: Vec<Array1<f64>>,
    crossings: Vec<Crossing>,
    /// Time spent on trace-only diagnostics, excluded from wall times.
    diagnostics: Duration,
}

type Outcome = (Array1<f64>, usize, Status, Option<usize>, f64);

impl Run<'_> {
    fn solver_time(&self) -> Duration {
        self.start.elapsed().saturating_sub(self.diagnostics)
    }

    fn iterate(&mut self) -> Outcome {
        let problem = self.problem;
        let config = self.config;
        let dim = problem.dim();
        let mut x = config.x0.clone().unwrap_or_else(|| Array1::zeros(dim));
        let mut x_prev = x.clone();
        let mut beta = 0.0;
        let mut fista = FistaState::default();
        let mut energy_x = problem.energy(x.view());
        if energy_x.is_nan() {
            return (x, 0, Status::NanAbort, Some(0), energy_x);
        }
        if config.record_iterates {
            self.iterates.push(x.clone());
        }
        let track_energy = config.line_search.is_some() || config.trace != TraceLevel::Off;
        let mut scratch = Array1::zeros(dim);

        for n in 0..config.max_iter {
            let xi = problem.g2().subgradient(x.view());
            let mut y = x.clone();
            if beta != 0.0 {
                Zip::from(&mut y)
                    .and(&x)
                    .and(&x_prev)
                    .for_each(|y, &x, &xp| *y = x + beta * (x - xp));
            }
            let (x_bar, info) = self.sub.step(problem, y.view(), xi.view());
            let d = &x_bar - &x;
            if d.iter().all(|&v| v == 0.0) {
                return (x, n, Status::StationaryDZero, None, energy_x);
            }
            if x_bar.iter().any(|v| !v.is_finite()) {
                return (x, n, Status::NanAbort, Some(n), energy_x);
            }
            let energy_bar = if track_energy {
                let e = problem.energy(x_bar.view());
                if e.is_nan() {
                    return (x, n, Status::NanAbort, Some(n), energy_x);
                }
                e
            } else {
                f64::NAN
            };
            let search = match &config.line_search {
                Some(ls) => match nonmonotone_search(
                    |z| problem.energy(z),
                    x_bar.view(),
                    energy_bar,
                    d.view(),
                    n,
                    ls,
                    &mut scratch,
                ) {
                    Ok(r) => r,
                    Err(_) => return (x, n, Status::NanAbort, Some(n), energy_x),
                },
                None => LineSearchResult::skipped(0, energy_bar),
            };
            let x_next = if search.accepted {
                scratch.clone()
            } else {
                x_bar.clone()
            };
            let beta_next = match &config.extrapolation {
                Extrapolation::None => 0.0,
                Extrapolation::Lsde(p) => lsde_update(&search, p),
                Extrapolation::Fista(policy) => {
                    let signal = policy.adaptive
                        && adaptive_restart_signal(y.view(), x_next.view(), x.view())
                            .expect("iterates share the problem dimension");
                    fista = fista_beta_step(fista, policy.fires(n, signal));
                    fista.beta
                }
            };
            let step_norm = norm((&x_next - &x).view());
            let state = IterateState {
                n,
                x: x_next,
                x_prev: x,
                y,
                x_bar,
                d,
                xi,
                lambda: search.lambda,
                beta,
                trials: search.trials,
                accepted: search.accepted,
                step_norm,
            };
            let (criterion, done) = config.termination.measure(&state, problem);
            energy_x = search.energy;
            if config.trace != TraceLevel::Off {
                self.push_row(&state, &search, energy_bar, beta_next, criterion, info);
            }
            self.record_crossings(&state, n);
            if config.record_iterates {
                self.iterates.push(state.x.clone());
            }
            let IterateState {
                x: xn, x_prev: xp, ..
            } = state;
            x = xn;
            x_prev = xp;
            beta = beta_next;
            if done {
                if !track_energy {
                    energy_x = problem.energy(x.view());
                }
                return (x, n + 1, Status::Converged, None, energy_x);
            }
        }
        if !track_energy {
            energy_x = problem.energy(x.view());
        }
        (x, config.max_iter, Status::MaxIter, None, energy_x)
    }

    fn push_row(
        &mut self,
        state: &IterateState,
        search: &LineSearchResult,
        energy_bar: f64,
        beta_next: f64,
        criterion: f64,
        info: StepInfo,
    ) {
        let problem = self.problem;
        let full = self.config.trace == TraceLevel::Full;
        let diag_start = Instant::now();
        let lyap_a = full.then(|| {
            lyapunov_a(
                search.energy,
                &self.sub,
                state.x_bar.view(),
                state.x_prev.view(),
            )
        });
        let lyap_h = if full && !problem.g1().is_smooth() {
            lyapunov_h(
                problem,
                &self.sub,
                state.x.view(),
                state.x_bar.view(),
                state.x_prev.view(),
                problem.g1().upper_modulus().unwrap_or(1.0),
            )
            .ok()
        } else {
            None
        };
        let crit = full.then(|| criticality_residual(problem, state.x.view()));
        self.diagnostics += diag_start.elapsed();
        self.trace.push(TraceRow {
            n: state.n,
            energy: search.energy,
            energy_bar,
            lyapunov_a: lyap_a,
            lyapunov_h: lyap_h,
            d_norm: norm(state.d.view()),
            step_norm: state.step_norm,
            lambda: search.lambda,
            beta: state.beta,
            beta_next,
            trials: search.trials,
            accepted: search.accepted,
            nu: search.nu,
            lsde_gap: lsde_gap(search.lambda, beta_next),
            crit_residual: crit,
            criterion,
            dist_ref: self
                .config
                .reference
                .as_ref()
                .map(|r| norm((&state.x - r).view())),
            inner_iterations: info.inner_iterations,
            inner_residual: info.inner_residual,
            inner_converged: info.inner_converged,
            wall_ms: self.solver_time().as_secs_f64() * 1e3,
        });
    }

    fn record_crossings(&mut self, state: &IterateState, n: usize) {
        if self.crossings.iter().all(|c| c.iterations.is_some()) {
            return;
        }
        let elapsed = self.solver_time().as_secs_f64();
        for c in self.crossings.iter_mut().filter(|c| c.iterations.is_none()) {
            let rule = self.config.termination.with_tolerance(c.tolerance);
            if rule.measure(state, self.problem).1 {
                c.iterations = Some(n + 1);
                c.wall_time_s = Some(elapsed);
            }
        }
    }
}

/// `‖xⁿ − x_final‖` along recorded iterates.
pub fn distances_to(iterates: &[Array1<f64>], target: ArrayView1<f64>) -> Vec<f64> {
    iterates
        .iter()
        .map(|x| norm((x - &target).view()))
        .collect()
}
