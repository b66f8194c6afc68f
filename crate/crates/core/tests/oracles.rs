mod common;

use common::*;
use dcopt::graphgl::{
    build_weights, gl_energy_terms, GlParams, Image, PriorLabels, SyntheticTwoPhase,
};
use dcopt::io::{
    load_mask, load_pgm, parse_libsvm, read_report, read_trace, write_pgm, write_report,
    write_trace, Report, ReportCell, TraceMeta,
};
use dcopt::scad::{huber, huber_scad_value, tilde_s, ScadParams};
use dcopt::solvers::TraceRow;
use dcopt::{Execution, Status};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn penalty_gradients_match_finite_differences() {
    checks::penalty_gradients().unwrap();
}

#[test]
fn huber_scad_is_huber_minus_tilde_s() {
    let p = ScadParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let t: f64 = rng.gen_range(-0.02..0.02);
        let split = p.mu * huber(t, p.alpha) - tilde_s(t, &p);
        assert!((huber_scad_value(t, &p) - split).abs() <= 1e-15);
    }
}

#[test]
fn piecewise_penalties_are_continuous_at_kinks() {
    checks::kink_continuity().unwrap();
}

#[test]
fn smooth_energy_gradients_match_finite_differences() {
    checks::smooth_energy_gradients().unwrap();
}

#[test]
fn g2_subgradient_inequality_holds() {
    checks::g2_subgradient_inequality().unwrap();
}

fn small_gl() -> (dcopt::graphgl::GraphWeights, PriorLabels, GlParams) {
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
    (w, inst.prior, params)
}

#[test]
fn graph_weights_structure() {
    let (w, prior, params) = small_gl();
    let n = w.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..n {
        let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| w.weight(i, j)).sum();
        assert!((row_sum - w.degree()[i]).abs() <= 1e-12);
        assert_eq!(w.weight(i, i), 0.0);
        for j in 0..n {
            assert_eq!(w.weight(i, j), w.weight(j, i));
            let v = w.weight(i, j);
            assert!((0.0..=1.0).contains(&v));
        }
    }
    let laplacian = w
        .scaled_laplacian_plus(params.tau, Array1::zeros(n).view())
        .unwrap();
    for _ in 0..20 {
        let x: Array1<f64> = Array1::from_iter((0..n).map(|_| rng.gen_range(-1.0..1.0)));
        let mut double_sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                double_sum += 0.5 * params.tau * w.weight(i, j) * (x[i] - x[j]).powi(2);
            }
        }
        let terms = gl_energy_terms(x.view(), &w, &prior, &params).unwrap();
        assert!((terms.dirichlet - double_sum).abs() <= 1e-10 * double_sum.max(1.0));
        // The ordered double sum counts each edge twice: τ/2·Σᵢⱼ = τ·xᵀLx.
        assert!((laplacian.quad_form(x.view()) - double_sum).abs() <= 1e-10 * double_sum.max(1.0));
    }
}

#[test]
fn weight_construction_is_execution_independent() {
    let inst = SyntheticTwoPhase {
        height: 20,
        width: 24,
        ..SyntheticTwoPhase::default()
    }
    .generate(4)
    .unwrap();
    let p = GlParams::default();
    let a = build_weights(&inst.image, &p, 1, Execution::Sequential).unwrap();
    let b = build_weights(&inst.image, &p, 1, Execution::Parallel).unwrap();
    assert_eq!(a.kappa_sq(), b.kappa_sq());
    assert_eq!(a.degree(), b.degree());
    for i in 0..a.dim() {
        assert_eq!(a.matrix().row(i), b.matrix().row(i));
    }
}

#[test]
fn libsvm_matches_naive_reader_on_random_lines() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut text = String::new();
    let mut expected = Vec::new();
    for _ in 0..1000 {
        let label = ["+1", "-1", "1", "0"][rng.gen_range(0..4)];
        let mut line = label.to_owned();
        let mut idx = 0;
        for _ in 0..rng.gen_range(0..8) {
            idx += rng.gen_range(1..20);
            let v: f64 = rng.gen_range(-100.0..100.0);
            line.push_str(&format!(" {idx}:{v}"));
        }
        expected.push(naive_libsvm_line(&line).unwrap());
        text.push_str(&line);
        text.push('\n');
    }
    let d = parse_libsvm(text.as_bytes(), "random").unwrap();
    assert_eq!(d.samples(), 1000);
    let max_index = expected
        .iter()
        .flat_map(|(_, e)| e.iter().map(|(i, _)| i + 1))
        .max()
        .unwrap_or(0);
    assert_eq!(d.features, max_index);
    for (k, (label, entries)) in expected.into_iter().enumerate() {
        assert_eq!(d.labels[k], label);
        assert_eq!(d.rows[k], entries);
    }
}

#[test]
fn pgm_examples() {
    let img = load_pgm(b"P2\n1 1\n255\n255\n").unwrap();
    assert_eq!(img.pixels(), &[1.0]);
    let (_, _, prior) = load_mask(b"P2\n3 1\n255\n255 128 0\n").unwrap();
    assert_eq!(prior.mask().to_vec(), vec![1.0, 0.0, 1.0]);
    assert_eq!(prior.labels().to_vec(), vec![1.0, 0.0, -1.0]);
    assert!(load_pgm(b"P5\n2 2\n255\n\x01\x02\x03").is_err());
    assert!(load_pgm(b"P7\n1 1\n255\n\x00").is_err());

    let pixels = [0.0, 1.0, 0.5, 0.25];
    let back = load_pgm(&write_pgm(2, 2, &pixels).unwrap()).unwrap();
    for (a, b) in back.pixels().iter().zip(pixels) {
        assert!((a - b).abs() <= 0.5 / 255.0);
    }
    let wide = load_pgm(b"P5\n1 1\n65535\n\xff\xff").unwrap();
    assert_eq!(wide.pixels(), &[1.0]);
    assert!(Image::new(1, 1, vec![1.5]).is_err());
}

fn meta() -> TraceMeta {
    TraceMeta {
        algorithm: "npdcae_nls".into(),
        profile: "scad".into(),
        seed: 3,
        problem: "p".into(),
        termination: "rel_change".into(),
        tolerance: 1e-6,
        status: Some(Status::Converged),
        iterations: 1,
        n0: 5,
        c_lambda: Some(1.234979e-5),
        mu_min: 0.1,
        initial_energy: 2.0,
        final_energy: 1.0,
    }
}

fn row(n: usize) -> TraceRow {
    TraceRow {
        n,
        energy: 1.0 / 3.0,
        energy_bar: 0.1 + 0.2,
        lyapunov_a: Some(std::f64::consts::PI),
        lyapunov_h: None,
        d_norm: 1e-300,
        step_norm: 5e-324,
        lambda: 0.18,
        beta: 0.0,
        beta_next: 1.0 / 1.181,
        trials: 3,
        accepted: true,
        nu: 0.9 / 7.0,
        lsde_gap: 0.25,
        crit_residual: Some(1e-17),
        criterion: 123456.789,
        dist_ref: None,
        inner_iterations: 5,
        inner_residual: Some(2.5e-11),
        inner_converged: true,
        wall_ms: 0.125,
    }
}

#[test]
fn trace_round_trips_bit_exactly() {
    let mut buf = Vec::new();
    write_trace(&mut buf, &meta(), &[]).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().count(), 2, "metadata and header only");
    let (m, rows) = read_trace(buf.as_slice()).unwrap();
    assert_eq!((m, rows.len()), (meta(), 0));

    let mut buf = Vec::new();
    write_trace(&mut buf, &meta(), &[row(0)]).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 3);
    let (_, rows) = read_trace(buf.as_slice()).unwrap();
    assert_eq!(rows, vec![row(0)]);
    let mut again = Vec::new();
    write_trace(&mut again, &meta(), &rows).unwrap();
    assert_eq!(again, buf);
}

#[test]
fn report_of_two_by_three_has_six_cells() {
    let mut r = Report::new("shape", "scad", 1);
    for alg in ["dca", "npdcae_nls"] {
        for tol in [1e-4, 1e-5, 1e-6] {
            r.cells.push(ReportCell::new(
                alg,
                "rel_change",
                tol,
                Status::Converged,
                Some(10),
                Some(0.5),
            ));
        }
    }
    let mut buf = Vec::new();
    write_report(&mut buf, &r).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 6);
    assert_eq!(read_report(buf.as_slice()).unwrap(), r);
    assert_eq!(r.cell("dca", 1e-5).unwrap().iter_display, "10");
}
