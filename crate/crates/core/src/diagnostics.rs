//! Lyapunov values, criticality residuals, local-rate fits and post-hoc
//! trace checks.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, DcError, Result};
use crate::model::DcProblem;
use crate::operator::{norm, SymOperator};
use crate::precond::Subproblem;
use crate::solvers::TraceRow;

/// `v ↦ ⟨v, P v⟩` for a proximal metric `P`.
pub trait ProximalMetric {
    fn metric_sq(&self, v: ArrayView1<f64>) -> f64;
}

impl ProximalMetric for Subproblem {
    fn metric_sq(&self, v: ArrayView1<f64>) -> f64 {
        Subproblem::metric_sq(self, v)
    }
}

/// `scale · M` for an explicit operator `M`.
#[derive(Clone, Copy, Debug)]
pub struct ScaledMetric<'a> {
    pub operator: &'a SymOperator,
    pub scale: f64,
}

impl ProximalMetric for ScaledMetric<'_> {
    fn metric_sq(&self, v: ArrayView1<f64>) -> f64 {
        self.scale * self.operator.quad_form(v)
    }
}

/// `E(x⁺) + ½⟨x̄ − x, P(x̄ − x)⟩` given `E(x⁺)`.
pub fn lyapunov_a(
    energy_next: f64,
    metric: &(impl ProximalMetric + ?Sized),
    x_bar: ArrayView1<f64>,
    x: ArrayView1<f64>,
) -> f64 {
    let d = &x_bar - &x;
    energy_next + 0.5 * metric.metric_sq(d.view())
}

/// `f(x⁺) + ⟨x⁺, w̄⟩ − g1*(w̄) − g2(x⁺) + (σ/2)‖x⁺ − x̄‖² + ½‖x̄ − x‖²_P`
/// with `w̄ ∈ ∂g1(x̄)` chosen towards `x⁺` and `g1*` evaluated through the
/// Fenchel equality at `(x̄, w̄)`.
pub fn lyapunov_h(
    problem: &DcProblem,
    metric: &(impl ProximalMetric + ?Sized),
    x_next: ArrayView1<f64>,
    x_bar: ArrayView1<f64>,
    x: ArrayView1<f64>,
    sigma: f64,
) -> Result<f64> {
    let w = problem.g1().anchored_subgradient(x_bar, x_next);
    lyapunov_h_with(problem, metric, x_next, w.view(), x_bar, x, sigma)
}

/// [`lyapunov_h`] with an explicit `w̄`, which is checked against the
/// subgradient inequality at `x⁺` and `x`.
pub fn lyapunov_h_with(
    problem: &DcProblem,
    metric: &(impl ProximalMetric + ?Sized),
    x_next: ArrayView1<f64>,
    w: ArrayView1<f64>,
    x_bar: ArrayView1<f64>,
    x: ArrayView1<f64>,
    sigma: f64,
) -> Result<f64> {
    for len in [x_next.len(), w.len(), x_bar.len(), x.len()] {
        check_dim(problem.dim(), len)?;
    }
    let g1 = problem.g1();
    let g1_bar = g1.value(x_bar);
    for z in [x_next.view(), x.view()] {
        let gap = g1.value(z) - g1_bar - w.dot(&(&z - &x_bar));
        if gap < -1e-8 {
            return Err(DcError::Diagnostic(format!(
                "w is not a subgradient of {} at x̄ (inequality off by {:.3e})",
                g1.name(),
                -gap
            )));
        }
    }
    let conjugate = x_bar.dot(&w) - g1_bar;
    let tied = &x_next - &x_bar;
    let d = &x_bar - &x;
    Ok(
        problem.f().value(x_next) + x_next.dot(&w) - conjugate - problem.g2().value(x_next)
            + 0.5 * sigma * tied.dot(&tied)
            + 0.5 * metric.metric_sq(d.view()),
    )
}

/// Norm of the minimal-norm element of `∇f(x) + ∂g1(x) − ∇g2(x)`.
pub fn criticality_residual(problem: &DcProblem, x: ArrayView1<f64>) -> f64 {
    let mut base = problem.grad_f(x);
    base -= &problem.g2().subgradient(x);
    norm(problem.g1().min_norm_residual(x, base.view()).view())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RateRegime {
    Linear,
    Sublinear,
    Finite,
    NoFit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub eta: Option<f64>,
    pub r_squared: Option<f64>,
    pub regime: RateRegime,
    /// Points entering the regression.
    pub points: usize,
}

/// Minimum sequence length accepted by [`fit_local_rate`].
pub const MIN_RATE_POINTS: usize = 30;
/// Trailing points excluded from the fit.
pub const RATE_EXCLUDED_TAIL: usize = 5;

/// Rate fit of `‖xⁿ − x_final‖` along recorded iterates.
pub fn fit_local_rate(iterates: &[Array1<f64>], x_final: ArrayView1<f64>) -> RateFit {
    let dist: Vec<f64> = iterates
        .iter()
        .map(|x| norm((x - &x_final).view()))
        .collect();
    fit_rate_from_distances(&dist)
}

/// Least-squares slope of `log dₙ` over the last third, minus the final
/// points. `η̂ = exp(slope)`.
pub fn fit_rate_from_distances(dist: &[f64]) -> RateFit {
    let no_fit = RateFit {
        eta: None,
        r_squared: None,
        regime: RateRegime::NoFit,
        points: 0,
    };
    if dist.len() < MIN_RATE_POINTS {
        return no_fit;
    }
    let end = dist.len() - RATE_EXCLUDED_TAIL;
    let start = dist.len() - dist.len() / 3;
    // exact hit that persists: finite termination
    if let Some(first_zero) = dist.iter().position(|&d| d == 0.0) {
        if first_zero < end && dist[first_zero..].iter().all(|&d| d == 0.0) {
            return RateFit {
                eta: Some(0.0),
                r_squared: None,
                regime: RateRegime::Finite,
                points: 0,
            };
        }
    }
    let pts: Vec<(f64, f64)> = (start..end)
        .filter(|&i| dist[i] > 0.0 && dist[i].is_finite())
        .map(|i| (i as f64, dist[i].ln()))
        .collect();
    if pts.len() < 3 {
        return RateFit {
            points: pts.len(),
            ..no_fit
        };
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    let eta = slope.exp();
    let regime = if eta > 0.0 && eta < 1.0 && r2 >= 0.9 {
        RateRegime::Linear
    } else {
        RateRegime::Sublinear
    };
    RateFit {
        eta: Some(eta),
        r_squared: Some(r2),
        regime,
        points: pts.len(),
    }
}

/// A failed post-hoc check at one trace row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub n: usize,
    pub what: String,
    pub amount: f64,
}

/// Rows where `1/(1+λ)² − β_next² ≤ C_λ`.
pub fn check_lsde_gap(trace: &[TraceRow], c_lambda: f64) -> Vec<Violation> {
    trace
        .iter()
        .filter(|r| !(r.lsde_gap > c_lambda))
        .map(|r| Violation {
            n: r.n,
            what: "lsde gap".into(),
            amount: c_lambda - r.lsde_gap,
        })
        .collect()
}

/// Tolerances for [`check_lyapunov_descent`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DescentSlack {
    /// Allowed increase of `A`, relative to `max(1, |A|)`.
    pub monotone: f64,
    /// Allowed shortfall in `A_{n−1} − A_n ≥ C₁‖xⁿ − xⁿ⁻¹‖²`, relative to
    /// `max(1, |A|)`.
    pub sufficient: f64,
}

impl Default for DescentSlack {
    fn default() -> Self {
        Self {
            monotone: 1e-12,
            sufficient: 1e-10,
        }
    }
}

/// Rows `n > n₀` where `A` increases or the sufficient decrease fails.
///
/// Rows without a recorded `A` are skipped.
pub fn check_lyapunov_descent(
    trace: &[TraceRow],
    n0: usize,
    c1: f64,
    slack: DescentSlack,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for pair in trace.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        if cur.n <= n0 {
            continue;
        }
        let (Some(a_prev), Some(a_cur)) = (prev.lyapunov_a, cur.lyapunov_a) else {
            continue;
        };
        let scale = a_prev.abs().max(1.0);
        let drop = a_prev - a_cur;
        if drop < -slack.monotone * scale {
            out.push(Violation {
                n: cur.n,
                what: "lyapunov A increased".into(),
                amount: -drop,
            });
        }
        let need = c1 * prev.step_norm * prev.step_norm;
        if drop < need - slack.sufficient * scale {
            out.push(Violation {
                n: cur.n,
                what: "insufficient A decrease".into(),
                amount: need - drop,
            });
        }
    }
    out
}

/// Accepted steps past `n₀` with `E(xⁿ⁺¹) > E(x̄ⁿ)`.
pub fn check_post_threshold_acceptance(trace: &[TraceRow], n0: usize) -> Vec<Violation> {
    trace
        .iter()
        .filter(|r| r.n >= n0 && r.accepted && r.energy > r.energy_bar)
        .map(|r| Violation {
            n: r.n,
            what: "accepted step increased energy".into(),
            amount: r.energy - r.energy_bar,
        })
        .collect()
}

/// First `n < n₀` with `E(xⁿ⁺¹) > E(xⁿ)`, given `E(x⁰)`.
pub fn nonmonotone_witness(trace: &[TraceRow], initial_energy: f64, n0: usize) -> Option<usize> {
    let mut prev = initial_energy;
    for r in trace {
        if r.n >= n0 {
            break;
        }
        if r.energy > prev {
            return Some(r.n);
        }
        prev = r.energy;
    }
    None
}

/// Whether the tail of `Σ‖Δx‖²` over the last fifth is under 1% of the total.
pub fn summable_steps(trace: &[TraceRow]) -> bool {
    let sq: Vec<f64> = trace.iter().map(|r| r.step_norm * r.step_norm).collect();
    let total: f64 = sq.iter().sum();
    if total == 0.0 {
        return true;
    }
    let tail: f64 = sq[sq.len() - sq.len() / 5..].iter().sum();
    tail < 0.01 * total
}
