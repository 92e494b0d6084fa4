use std::sync::OnceLock;

use blowup_lab::error::LabError;
use blowup_lab::modes::explicit_solution;
use blowup_lab::sim::*;

fn default_run() -> &'static BlowupRun {
    static RUN: OnceLock<BlowupRun> = OnceLock::new();
    RUN.get_or_init(|| run_blowup(SimConfig::default()).unwrap())
}

fn short_config() -> SimConfig {
    SimConfig { lambda_min: 1e-3, ..SimConfig::default() }
}

#[test]
fn config_file_errors_carry_line_numbers() {
    let text = "# run\nd = 8\n\ngauge = sideways\n";
    match SimConfig::parse(text) {
        Err(LabError::Parse { line, msg }) => {
            assert_eq!(line, 4);
            assert!(msg.contains("gauge"));
        }
        other => panic!("{other:?}"),
    }
    let c = SimConfig::parse("s0 = 500 # later start\nlambda_min = 1e-4").unwrap();
    assert_eq!(c.s0, 500.0);
    assert_eq!(c.lambda_min, 1e-4);
    assert!(SimConfig::parse("lambda_min = 2").is_err());
}

#[test]
fn ground_state_stays_put() {
    let sim = Simulator::new(SimConfig { energy_tol: 1e-5, ..SimConfig::default() }).unwrap();
    let mut st = sim.init_data(&[0.0, 0.0], None).unwrap();
    assert_eq!(st.s, 0.0);
    for _ in 0..20 {
        st = sim.step(&st).unwrap();
    }
    assert!((st.lambda - 1.0).abs() < 1e-6, "λ = {}", st.lambda);
    assert!(st.b.iter().all(|b| b.abs() < 1e-8), "b = {:?}", st.b);
    assert!(st.q.max_abs_on(0.0, 100.0) < 1e-5);
}

#[test]
fn decomposition_recovers_scale_and_parameters() {
    let sim = Simulator::new(SimConfig::default()).unwrap();
    let b0 = explicit_solution(&sim.modes, 1000.0).unwrap();
    let st = sim.init_data(&b0, None).unwrap();
    assert!((st.lambda - 1.0).abs() < 1e-12);
    for (b, e) in st.b.iter().zip(&b0) {
        assert!((b - e).abs() <= 1e-10 * b0[0], "{b} vs {e}");
    }
    assert!(st.orth_residual <= sim.cfg.newton_tol);
    assert!(st.q.max_abs_on(0.0, 100.0) < 1e-8);
    for mu in [0.7, 1.3, 2.0] {
        let st = sim.init_scaled(&b0, mu).unwrap();
        assert!((st.mu - mu).abs() < 1e-8 * mu, "μ = {} vs {mu}", st.mu);
        assert!((st.b[0] - b0[0]).abs() < 1e-7 * b0[0]);
    }
}

#[test]
fn decomposition_jacobian_is_nondegenerate_at_ground_state() {
    let sim = Simulator::new(SimConfig::default()).unwrap();
    let j = sim.decomposition_jacobian(&[0.0, 0.0]).unwrap();
    let norm = j[(0, 0)].abs();
    assert!(norm > 1.0);
    let det = j.determinant().abs();
    assert!((det / norm.powi(3) - 1.0).abs() < 1e-3, "det = {det}, norm = {norm}");
}

#[test]
fn initial_data_outside_the_regime_is_rejected() {
    let sim = Simulator::new(SimConfig::default()).unwrap();
    let b0 = explicit_solution(&sim.modes, 1000.0).unwrap();
    assert!(matches!(sim.init_data(&[-b0[0], b0[1]], None), Err(LabError::Parameter(_))));
    assert!(matches!(sim.init_data(&[b0[0], 1e-3], None), Err(LabError::Parameter(_))));
    assert!(matches!(sim.init_data(&[b0[0]], None), Err(LabError::Parameter(_))));
}

#[test]
fn initial_state_is_regular_at_origin() {
    let sim = Simulator::new(SimConfig::default()).unwrap();
    let b0 = explicit_solution(&sim.modes, 1000.0).unwrap();
    let st = sim.init_data(&b0, None).unwrap();
    let y0 = st.w.grid().nodes()[0];
    assert!((st.w.values()[0] / y0 - 1.0).abs() < 1e-5);
    assert!(st.energy > 0.0 && st.energy.is_finite());
    assert!(sim.energy_within(&st.w, 1.0, 10.0) < st.energy);
    assert!(sim.sobolev_diagnostics(&st, 3).is_err());
}

#[test]
fn blowup_rate_matches_the_quantized_law() {
    let run = default_run();
    let r = &run.report;
    assert_eq!(r.outcome, Outcome::Blowup);
    assert!((r.exponent / r.expected_exponent - 1.0).abs() < 0.05, "exponent {}", r.exponent);
    assert!((r.exponent_nls / r.expected_exponent - 1.0).abs() < 0.05);
    assert!(r.lambda_decades >= 2.0);
    assert!(r.energy_non_increasing, "max energy change {}", r.max_energy_change);
    assert!(r.type2_growth >= 10.0, "growth {}", r.type2_growth);
    assert!((r.b1_s_over_c1 - 1.0).abs() < 0.01);
    assert!(r.max_orth_residual <= run.config.newton_tol.max(1e-10));
    assert!(run.rows.windows(2).all(|w| w[1].t > w[0].t));
}

#[test]
fn remainder_norm_stays_bounded() {
    let rows = &default_run().rows;
    let n = rows.len();
    let envelope = |a: usize, b: usize| rows[a..b].iter().map(|r| r.e2).fold(0.0f64, f64::max);
    let early = envelope(n / 20, n / 5);
    let late = envelope(n / 5, n);
    assert!(rows.iter().all(|r| r.e2 >= 0.0 && r.e2.is_finite()));
    assert!(late <= 10.0 * early, "𝓔_2 envelope grew from {early:e} to {late:e}");
}

#[test]
fn sobolev_norms_vanish_without_remainder() {
    let sim = Simulator::new(SimConfig::default()).unwrap();
    let mut st = sim.init_data(&[0.0, 0.0], None).unwrap();
    st.q = st.q.scale(0.0);
    assert_eq!(sim.sobolev_diagnostics(&st, 2).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn blowup_time_scales_with_the_square_of_the_initial_scale() {
    let sim = Simulator::new(short_config()).unwrap();
    let b0 = explicit_solution(&sim.modes, sim.cfg.s0).unwrap();
    let base = run_from(&sim, sim.init_data(&b0, None).unwrap()).unwrap();
    let mu = 1.5;
    let scaled = run_from(&sim, sim.init_scaled(&b0, mu).unwrap()).unwrap();
    let ratio = scaled.report.t_blowup / base.report.t_blowup;
    assert!((ratio / (mu * mu) - 1.0).abs() < 1e-4, "T ratio {ratio}");
    assert!((scaled.report.exponent - base.report.exponent).abs() < 1e-3);
}

#[test]
fn gauges_agree() {
    let full = run_blowup(short_config()).unwrap();
    let post = run_blowup(SimConfig { gauge: Gauge::PosthocFit, ..short_config() }).unwrap();
    assert_eq!(post.report.outcome, Outcome::Blowup);
    assert!((post.report.exponent - full.report.exponent).abs() < 1e-3);
    assert!((post.report.t_blowup / full.report.t_blowup - 1.0).abs() < 1e-4);
}

#[test]
fn small_remainder_does_not_change_the_rate() {
    let clean = run_blowup(short_config()).unwrap();
    let bumped = run_blowup(SimConfig { q0_amplitude: 1e-3, ..short_config() }).unwrap();
    assert_eq!(bumped.report.outcome, Outcome::Blowup);
    assert!((bumped.report.exponent - clean.report.exponent).abs() < 1e-3);
}

#[test]
fn frames_follow_the_requested_cadence() {
    let run = run_blowup(SimConfig { lambda_min: 0.5, frame_every: 5, ..SimConfig::default() }).unwrap();
    assert!(!run.frames.is_empty());
    assert!(run.frames.iter().all(|f| f.step % 5 == 0 && f.w.len() == run.config.n));
}
