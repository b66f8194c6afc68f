//! Non-monotone Armijo search, line-search-determined extrapolation (LSDE)
//! and the FISTA momentum recursion with its restart rules.

use ndarray::{Array1, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, DcError, Result};

/// Denominator `p(n)` of the non-monotonicity budget `ν_n = ω‖d‖²/p(n)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuSchedule {
    /// `p(n) = n + 1`.
    #[default]
    Harmonic,
    /// `p(n) = (n + 1)²`.
    Quadratic,
    /// `ν_n ≡ 0`: a monotone search.
    Zero,
}

impl NuSchedule {
    /// `1/p(n)`, zero for the monotone schedule.
    pub fn weight(self, n: usize) -> f64 {
        let p = (n + 1) as f64;
        match self {
            NuSchedule::Harmonic => 1.0 / p,
            NuSchedule::Quadratic => 1.0 / (p * p),
            NuSchedule::Zero => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearchParams {
    pub lambda_max: f64,
    pub rho: f64,
    pub eta: f64,
    pub omega: f64,
    pub n_max: usize,
    pub nu_schedule: NuSchedule,
    /// Trial step sizes below this are not attempted.
    pub min_lambda: f64,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self::scad_profile()
    }
}

impl LineSearchParams {
    pub fn scad_profile() -> Self {
        Self {
            lambda_max: 2.0,
            rho: 0.3,
            eta: 2.9,
            omega: 0.9,
            n_max: 3,
            nu_schedule: NuSchedule::Harmonic,
            min_lambda: 1e-8,
        }
    }

    pub fn gl_profile() -> Self {
        Self {
            eta: 0.3,
            omega: 0.001,
            ..Self::scad_profile()
        }
    }

    /// Monotone backtracking used by the boosted DCA baseline.
    pub fn monotone(eta: f64) -> Self {
        Self {
            eta,
            omega: 0.0,
            nu_schedule: NuSchedule::Zero,
            ..Self::scad_profile()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DcError::InvalidParameter(m.to_string()));
        if !(self.lambda_max > 0.0) {
            return bad("lambda_max must be positive");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.eta > 0.0) {
            return bad("eta must be positive");
        }
        if !(self.omega >= 0.0) {
            return bad("omega must be nonnegative");
        }
        if self.n_max == 0 {
            return bad("n_max must be at least 1");
        }
        if !(self.min_lambda >= 0.0) {
            return bad("min_lambda must be nonnegative");
        }
        Ok(())
    }

    /// `ρ^{k−1} λ_max` for the `k`-th trial (1-based).
    pub fn trial_lambda(&self, k: usize) -> f64 {
        self.lambda_max * self.rho.powi(k as i32 - 1)
    }

    /// Smallest step the search can accept.
    pub fn smallest_lambda(&self) -> f64 {
        self.trial_lambda(self.n_max)
    }

    /// First `n` with `ω/p(n) < η λ_max ρ^{N_max}`; past it the budget `ν_n` is
    /// dominated by the sufficient-decrease term of every trial.
    pub fn monotone_threshold(&self) -> usize {
        let bound = self.eta * self.lambda_max * self.rho.powi(self.n_max as i32);
        (0..)
            .find(|&n| self.omega * self.nu_schedule.weight(n) < bound)
            .expect("the budget weight decays to zero")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsdeParams {
    pub b1: f64,
    pub b2: f64,
}

impl Default for LsdeParams {
    fn default() -> Self {
        Self { b1: 0.001, b2: 0.0 }
    }
}

impl LsdeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b1 > 0.0) {
            return Err(DcError::InvalidParameter("b1 must be positive".into()));
        }
        if !(self.b2 >= 0.0 && self.b2 < 1.0) {
            return Err(DcError::InvalidParameter("b2 must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSearchResult {
    pub accepted: bool,
    pub lambda: f64,
    /// `a(n)`: index of the accepted trial, `N_max + 1` on failure.
    pub trials: usize,
    pub nu: f64,
    /// Energy at `x̄ + λd`; equals `E(x̄)` on failure.
    pub energy: f64,
    /// Energies of every trial in order.
    pub trial_energies: Vec<f64>,
}

impl LineSearchResult {
    /// The outcome of a search that was never run (`λ = 0`).
    pub fn skipped(n_max: usize, energy_bar: f64) -> Self {
        Self {
            accepted: false,
            lambda: 0.0,
            trials: n_max + 1,
            nu: 0.0,
            energy: energy_bar,
            trial_energies: Vec::new(),
        }
    }
}

/// `ν_n = ω ‖d‖² / p(n)`.
pub fn nu_schedule(n: usize, omega: f64, d_norm_sq: f64, schedule: NuSchedule) -> f64 {
    if d_norm_sq == 0.0 {
        return 0.0;
    }
    omega * d_norm_sq * schedule.weight(n)
}

/// `E(x̄ + λd) ≤ E(x̄) − ηλ‖d‖² + ν`.
pub fn armijo_holds(
    trial: f64,
    energy_bar: f64,
    eta: f64,
    lambda: f64,
    d_norm_sq: f64,
    nu: f64,
) -> bool {
    trial <= energy_bar - eta * lambda * d_norm_sq + nu
}

/// Try `λ = ρ^{k−1}λ_max` for `k = 1, 2, …, N_max` and accept the first that
/// satisfies the relaxed Armijo condition.
///
/// `trial_point` is a scratch buffer of the same length as `x_bar`; on
/// acceptance it holds `x̄ + λd`.
pub fn nonmonotone_search<F>(
    mut energy: F,
    x_bar: ArrayView1<f64>,
    energy_bar: f64,
    d: ArrayView1<f64>,
    n: usize,
    params: &LineSearchParams,
    trial_point: &mut Array1<f64>,
) -> Result<LineSearchResult>
where
    F: FnMut(ArrayView1<f64>) -> f64,
{
    check_dim(x_bar.len(), d.len())?;
    check_dim(x_bar.len(), trial_point.len())?;
    let d_norm_sq = d.dot(&d);
    let nu = nu_schedule(n, params.omega, d_norm_sq, params.nu_schedule);
    let mut trial_energies = Vec::with_capacity(params.n_max);
    for k in 1..=params.n_max {
        let lambda = params.trial_lambda(k);
        if lambda < params.min_lambda {
            break;
        }
        Zip::from(&mut *trial_point)
            .and(&x_bar)
            .and(&d)
            .for_each(|t, &xb, &di| *t = xb + lambda * di);
        let e = energy(trial_point.view());
        if e.is_nan() {
            return Err(DcError::NanEnergy { iteration: n });
        }
        trial_energies.push(e);
        if armijo_holds(e, energy_bar, params.eta, lambda, d_norm_sq, nu) {
            return Ok(LineSearchResult {
                accepted: true,
                lambda,
                trials: k,
                nu,
                energy: e,
                trial_energies,
            });
        }
    }
    Ok(LineSearchResult {
        accepted: false,
        lambda: 0.0,
        trials: params.n_max + 1,
        nu: 0.0,
        energy: energy_bar,
        trial_energies,
    })
}

/// `β_{n+1} = 1/(1 + b1 + λ_n)` after success, `b2` after failure.
pub fn lsde_update(result: &LineSearchResult, params: &LsdeParams) -> f64 {
    if result.accepted {
        1.0 / (1.0 + params.b1 + result.lambda)
    } else {
        params.b2
    }
}

/// `1/(1+λ)² − β²`.
pub fn lsde_gap(lambda: f64, beta: f64) -> f64 {
    1.0 / ((1.0 + lambda) * (1.0 + lambda)) - beta * beta
}

/// Uniform lower bound on [`lsde_gap`] over every reachable `(λ_n, β_{n+1})`.
pub fn c_lambda(params: &LsdeParams, lambda_max: f64) -> f64 {
    let b1 = params.b1;
    let s = 1.0 + lambda_max;
    let t = 1.0 + b1 + lambda_max;
    let case1 = b1 * (1.0 + b1) / (s * s * t * t);
    let case2 = 0.5 * (1.0 - params.b2 * params.b2);
    case1.min(case2)
}

/// FISTA momentum state `(θ_{n−1}, θ_n, β_n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FistaState {
    pub theta_prev: f64,
    pub theta: f64,
    pub beta: f64,
}

impl Default for FistaState {
    fn default() -> Self {
        Self {
            theta_prev: 1.0,
            theta: 1.0,
            beta: 0.0,
        }
    }
}

/// `θ_{n+1} = (1 + √(1 + 4θ_n²))/2`, `β_{n+1} = (θ_n − 1)/θ_{n+1}`; a restart
/// resets both `θ` to 1 and `β` to 0.
pub fn fista_beta_step(state: FistaState, restart: bool) -> FistaState {
    if restart {
        return FistaState::default();
    }
    let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * state.theta * state.theta).sqrt());
    FistaState {
        theta_prev: state.theta,
        theta: theta_next,
        beta: (state.theta - 1.0) / theta_next,
    }
}

/// `⟨y − x_next, x_next − x⟩ > 0`.
pub fn adaptive_restart_signal(
    y: ArrayView1<f64>,
    x_next: ArrayView1<f64>,
    x: ArrayView1<f64>,
) -> Result<bool> {
    check_dim(y.len(), x_next.len())?;
    check_dim(y.len(), x.len())?;
    let mut s = 0.0;
    Zip::from(&y).and(&x_next).and(&x).for_each(|&y, &xn, &x| {
        s += (y - xn) * (xn - x);
    });
    Ok(s > 0.0)
}

/// Restart rules for the FISTA baselines.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestartPolicy {
    /// Reset every `T̄` iterations.
    pub fixed: Option<usize>,
    pub adaptive: bool,
}

impl RestartPolicy {
    pub const NONE: Self = Self {
        fixed: None,
        adaptive: false,
    };

    /// Whether the momentum for iteration `n + 1` must be reset.
    pub fn fires(&self, n: usize, adaptive_signal: bool) -> bool {
        let periodic = self.fixed.is_some_and(|t| t > 0 && (n + 1).is_multiple_of(t));
        periodic || (self.adaptive && adaptive_signal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy_params(omega: f64) -> LineSearchParams {
        LineSearchParams {
            lambda_max: 2.0,
            rho: 0.3,
            eta: 0.3,
            omega,
            n_max: 3,
            nu_schedule: NuSchedule::Harmonic,
            min_lambda: 1e-8,
        }
    }

    fn half_square(x: ArrayView1<f64>) -> f64 {
        0.5 * x.dot(&x)
    }

    #[test]
    fn nu_examples() {
        assert_eq!(nu_schedule(0, 0.9, 1.0, NuSchedule::Harmonic), 0.9);
        assert_eq!(nu_schedule(7, 0.9, 0.0, NuSchedule::Harmonic), 0.0);
        assert!((nu_schedule(9, 0.001, 4.0, NuSchedule::Harmonic) - 0.0004).abs() < 1e-18);
    }

    #[test]
    fn search_backtracks_once() {
        let xb = array![0.5];
        let d = array![-0.5];
        let mut buf = Array1::zeros(1);
        let r = nonmonotone_search(
            half_square,
            xb.view(),
            0.125,
            d.view(),
            0,
            &toy_params(0.0),
            &mut buf,
        )
        .unwrap();
        assert!(r.accepted);
        assert_eq!(r.trials, 2);
        assert!((r.lambda - 0.6).abs() < 1e-15);
        assert_eq!(r.trial_energies.len(), 2);
        assert!((r.trial_energies[0] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn budget_admits_first_trial() {
        let xb = array![0.5];
        let d = array![-0.5];
        let mut buf = Array1::zeros(1);
        let r = nonmonotone_search(
            half_square,
            xb.view(),
            0.125,
            d.view(),
            0,
            &toy_params(10.0),
            &mut buf,
        )
        .unwrap();
        assert!(r.accepted);
        assert_eq!((r.trials, r.lambda), (1, 2.0));
        assert!((r.nu - 2.5).abs() < 1e-15);
    }

    #[test]
    fn ascent_direction_fails() {
        let xb = array![1.0];
        let d = array![1.0];
        let mut buf = Array1::zeros(1);
        let params = LineSearchParams {
            eta: 100.0,
            ..toy_params(0.0)
        };
        let r = nonmonotone_search(half_square, xb.view(), 0.5, d.view(), 0, &params, &mut buf)
            .unwrap();
        assert!(!r.accepted);
        assert_eq!((r.lambda, r.trials, r.nu), (0.0, 4, 0.0));
        assert_eq!(r.trial_energies.len(), 3);
    }

    #[test]
    fn nan_energy_aborts() {
        let xb = array![1.0];
        let d = array![1.0];
        let mut buf = Array1::zeros(1);
        let r = nonmonotone_search(
            |_| f64::NAN,
            xb.view(),
            0.5,
            d.view(),
            4,
            &toy_params(0.0),
            &mut buf,
        );
        assert!(matches!(r, Err(DcError::NanEnergy { iteration: 4 })));
    }

    #[test]
    fn min_lambda_truncates_trials() {
        let params = LineSearchParams {
            min_lambda: 1.0,
            eta: 100.0,
            ..toy_params(0.0)
        };
        let mut buf = Array1::zeros(1);
        let r = nonmonotone_search(
            half_square,
            array![1.0].view(),
            0.5,
            array![1.0].view(),
            0,
            &params,
            &mut buf,
        )
        .unwrap();
        assert_eq!(r.trial_energies.len(), 1);
        assert_eq!(r.trials, params.n_max + 1);
    }

    #[test]
    fn lsde_examples() {
        let p = LsdeParams::default();
        let ok = |lambda| LineSearchResult {
            accepted: true,
            lambda,
            trials: 1,
            nu: 0.0,
            energy: 0.0,
            trial_energies: vec![],
        };
        assert!((lsde_update(&ok(2.0), &p) - 0.333_222).abs() < 1e-6);
        assert!((lsde_update(&ok(0.18), &p) - 0.846_740).abs() < 1e-6);
        assert_eq!(lsde_update(&LineSearchResult::skipped(3, 0.0), &p), 0.0);
    }

    #[test]
    fn c_lambda_value() {
        let c = c_lambda(&LsdeParams::default(), 2.0);
        assert!((c - 1.234_979e-5).abs() < 1e-11);
        assert!(lsde_gap(0.0, 0.0) > 0.5);
    }

    #[test]
    fn fista_recursion() {
        let s1 = fista_beta_step(FistaState::default(), false);
        assert!((s1.theta - 1.618_034).abs() < 1e-6);
        assert_eq!(s1.beta, 0.0);
        let s2 = fista_beta_step(s1, false);
        assert!((s2.theta - 2.193_527).abs() < 1e-6);
        assert!((s2.beta - 0.281_754).abs() < 1e-6);
        assert_eq!(fista_beta_step(s2, true), FistaState::default());
    }

    #[test]
    fn adaptive_signal_examples() {
        let z = array![0.0, 0.0];
        assert!(!adaptive_restart_signal(z.view(), z.view(), z.view()).unwrap());
        let y = array![2.0, 0.0];
        let xn = array![1.0, 0.0];
        assert!(adaptive_restart_signal(y.view(), xn.view(), z.view()).unwrap());
        assert!(!adaptive_restart_signal(y.view(), xn.view(), array![2.0, 0.0].view()).unwrap());
    }

    #[test]
    fn thresholds_for_profiles() {
        assert_eq!(LineSearchParams::scad_profile().monotone_threshold(), 5);
        assert_eq!(LineSearchParams::gl_profile().monotone_threshold(), 0);
        assert_eq!(LineSearchParams::monotone(0.1).monotone_threshold(), 0);
    }

    #[test]
    fn fixed_restart_period() {
        let p = RestartPolicy {
            fixed: Some(200),
            adaptive: false,
        };
        assert!(!p.fires(0, true));
        assert!(p.fires(199, false));
        assert!(!RestartPolicy::NONE.fires(199, true));
    }
}
