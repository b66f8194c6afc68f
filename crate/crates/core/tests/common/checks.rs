//! Oracle checks returning the first failure, shared by the oracle and
//! acceptance suites.

use super::*;
use dcopt::graphgl::{build_gl_problem, build_weights, GlParams, SyntheticTwoPhase};
use dcopt::scad::{
    build_scad_problem, huber, huber_grad, huber_scad_value, scad_value, tilde_s, tilde_s_grad,
    ScadParams, ScadSplit, ScadVariant, SyntheticScad,
};
use dcopt::{DcProblem, Execution};
use ndarray::{arr1, Array1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_POINTS: usize = 100;
pub const FD_TOL: f64 = 1e-6;
pub const KINK_GAP: f64 = 1e-3;
pub const SUBGRADIENT_PAIRS: usize = 1000;

pub type Check = std::result::Result<(), String>;

/// Penalty parameters with kinks far enough apart for `KINK_GAP`.
pub fn wide() -> ScadParams {
    ScadParams::new(0.5, 10.0, Some(0.25)).unwrap()
}

fn kinks(p: &ScadParams) -> Vec<f64> {
    vec![0.0, p.alpha, p.mu, p.theta * p.mu]
}

fn fd_1d(
    name: &str,
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    p: &ScadParams,
    seed: u64,
) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in points_off_kinks(
        &mut rng,
        3.0 * p.theta * p.mu,
        &kinks(p),
        KINK_GAP,
        FD_POINTS,
    ) {
        let fd = central_difference(&f, t, 1e-6);
        let err = rel_err(fd, g(t));
        if err > FD_TOL {
            return Err(format!(
                "{name}: t={t} fd={fd} exact={} err={err:.2e}",
                g(t)
            ));
        }
    }
    Ok(())
}

pub fn penalty_gradients() -> Check {
    let p = wide();
    let sign = |t: f64| if t > 0.0 { 1.0 } else { -1.0 };
    fd_1d(
        "tilde_s",
        |t| tilde_s(t, &p),
        |t| tilde_s_grad(t, &p),
        &p,
        1,
    )?;
    fd_1d(
        "huber",
        |t| huber(t, p.alpha),
        |t| huber_grad(t, p.alpha),
        &p,
        2,
    )?;
    fd_1d(
        "scad",
        |t| scad_value(arr1(&[t]).view(), &p),
        |t| p.mu * sign(t) - tilde_s_grad(t, &p),
        &p,
        3,
    )?;
    fd_1d(
        "huber_scad",
        |t| huber_scad_value(t, &p),
        |t| p.mu * huber_grad(t, p.alpha) - tilde_s_grad(t, &p),
        &p,
        4,
    )
}

pub fn kink_continuity() -> Check {
    for p in [ScadParams::default(), wide()] {
        for k in [p.mu, p.theta * p.mu] {
            let (lo, hi) = (k.next_down(), k.next_up());
            let jump = (tilde_s(lo, &p) - tilde_s(hi, &p))
                .abs()
                .max((tilde_s(k, &p) - tilde_s(hi, &p)).abs());
            if jump > 1e-14 {
                return Err(format!("tilde_s jumps by {jump:e} at {k}"));
            }
        }
        for k in [p.alpha, p.mu, p.theta * p.mu] {
            let jump =
                (huber_scad_value(k.next_down(), &p) - huber_scad_value(k.next_up(), &p)).abs();
            if jump > 1e-14 {
                return Err(format!("huber_scad jumps by {jump:e} at {k}"));
            }
        }
    }
    Ok(())
}

pub fn small_scad(split: ScadSplit, variant: ScadVariant) -> DcProblem {
    let inst = SyntheticScad {
        m: 20,
        k: 40,
        sparsity: 4,
        noise_std: 0.01,
    }
    .generate(3)
    .unwrap();
    build_scad_problem(&inst.data, &ScadParams::default(), variant, split).unwrap()
}

pub fn small_gl() -> DcProblem {
    let inst = SyntheticTwoPhase {
        height: 8,
        width: 8,
        prior_fraction: 0.25,
        ..SyntheticTwoPhase::default()
    }
    .generate(2)
    .unwrap();
    let params = GlParams::default();
    let w = build_weights(&inst.image, &params, 2, Execution::Sequential).unwrap();
    build_gl_problem(&w, &inst.prior, &params).unwrap()
}

fn directional_fd(problem: &DcProblem, x: &Array1<f64>, dir: &Array1<f64>, h: f64) -> f64 {
    let plus = x + &(dir * h);
    let minus = x - &(dir * h);
    (problem.energy(plus.view()) - problem.energy(minus.view())) / (2.0 * h)
}

pub fn smooth_energy_gradients() -> Check {
    let gl = small_gl();
    let huber = small_scad(ScadSplit::Standard, ScadVariant::Huber);
    let p = ScadParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (name, problem, half, kinked) in [
        ("gl", &gl, 0.9, false),
        ("huber_scad_ls", &huber, 2.0, true),
    ] {
        let n = problem.dim();
        let mut checked = 0;
        while checked < FD_POINTS {
            let x: Array1<f64> = Array1::from_iter((0..n).map(|_| rng.gen_range(-half..half)));
            if kinked
                && x.iter()
                    .any(|&t| kinks(&p).iter().any(|k| (t.abs() - k).abs() < KINK_GAP))
            {
                continue;
            }
            let dir = Array1::from_iter((0..n).map(|_| rng.gen_range(-1.0..1.0)));
            let exact = problem
                .energy_gradient(x.view())
                .ok_or("energy not smooth")?
                .dot(&dir);
            let fd = directional_fd(problem, &x, &dir, 1e-6);
            if rel_err(fd, exact) > FD_TOL {
                return Err(format!("{name}: fd={fd} exact={exact}"));
            }
            checked += 1;
        }
    }
    Ok(())
}

pub fn g2_subgradient_inequality() -> Check {
    let families = [
        (
            "tilde_s",
            small_scad(ScadSplit::Standard, ScadVariant::L1),
            0.05,
        ),
        (
            "boosted_l1",
            small_scad(ScadSplit::Boosted, ScadVariant::L1),
            0.05,
        ),
        (
            "boosted_huber",
            small_scad(ScadSplit::Boosted, ScadVariant::Huber),
            0.05,
        ),
        ("shifted_well", small_gl(), 3.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, problem, half) in families {
        let n = problem.dim();
        for _ in 0..SUBGRADIENT_PAIRS {
            let x = Array1::from_iter((0..n).map(|_| rng.gen_range(-half..half)));
            let z = Array1::from_iter((0..n).map(|_| rng.gen_range(-half..half)));
            let xi = problem.g2().subgradient(x.view());
            let lhs = problem.g2().value(z.view());
            let rhs = problem.g2().value(x.view()) + xi.dot(&(&z - &x));
            if lhs < rhs - 1e-10 * lhs.abs().max(1.0) {
                return Err(format!("{name}: {lhs} < {rhs}"));
            }
        }
    }
    Ok(())
}
