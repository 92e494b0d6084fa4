//! Per-dimension checks behind `verify-all`.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linop::{apply_a, apply_astar, build_phi_m, coercivity_probe, generate_tk, OperatorContext};
use crate::modes::{build_al, expected_spectrum, explicit_residual, explicit_solution, integrate_system, ModeSystem};
use crate::numerics::{inner_product, make_grid, GridFunction, RadialGrid};
use crate::profile::{gamma_exponent, solve_q, spectral_params, wronskian_residual};
use crate::qb::build_sk;

/// Deliberate defects for exercising the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Flips the sign of the c_k recurrence.
    CkSign,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub d: usize,
    pub passed: bool,
    /// Measured quantity compared against the threshold.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub dims: Vec<usize>,
    pub seed: u64,
    pub fault: Option<Fault>,
    pub passed: bool,
    pub checks: Vec<Check>,
}

struct Measured {
    passed: bool,
    value: f64,
    threshold: f64,
    detail: String,
}

fn at_most(value: f64, threshold: f64, detail: String) -> Measured {
    Measured { passed: value <= threshold, value, threshold, detail }
}

fn record(name: &str, d: usize, m: Result<Measured>) -> Check {
    match m {
        Ok(m) => {
            Check { name: name.into(), d, passed: m.passed, value: m.value, threshold: m.threshold, detail: m.detail }
        }
        Err(e) => {
            Check { name: name.into(), d, passed: false, value: f64::NAN, threshold: f64::NAN, detail: e.to_string() }
        }
    }
}

fn context(d: usize, y_min: f64, y_max: f64, n: usize) -> Result<OperatorContext> {
    let g = make_grid(d, y_min, y_max, n)?;
    Ok(OperatorContext::new(Arc::new(solve_q(&g)?)))
}

/// Mode system with the coefficients altered by the injected fault.
fn mode_system(d: usize, ell: usize, l: usize, fault: Option<Fault>) -> Result<ModeSystem> {
    let mut sys = ModeSystem::new(d, ell, l)?;
    if fault == Some(Fault::CkSign) {
        let den = 2.0 * ell as f64 - sys.gamma;
        for k in 1..ell.min(l) {
            sys.c[k] = sys.gamma * (ell - k) as f64 / den * sys.c[k - 1];
        }
    }
    Ok(sys)
}

fn valid_ells(gamma: f64) -> Vec<usize> {
    (1..=3).filter(|&ell| 2.0 * ell as f64 > gamma).collect()
}

fn bump(grid: &Arc<RadialGrid>, mu: f64, sigma: f64) -> GridFunction {
    GridFunction::from_fn(grid, Some(1), |y| y * (-((y.ln() - mu) / sigma).powi(2)).exp())
}

fn check_gamma(d: usize) -> Result<Measured> {
    let gamma = gamma_exponent(d)?;
    let (_, delta) = spectral_params(d)?;
    let passed = gamma > 1.0 && gamma <= 2.0 && (d != 7 || gamma == 2.0) && delta > 0.0 && delta < 1.0;
    Ok(Measured { passed, value: gamma, threshold: 2.0, detail: format!("γ = {gamma}, δ = {delta}") })
}

fn check_profile(ctx: &OperatorContext) -> Result<Measured> {
    let s = ctx.pack().summary()?;
    let gap = (s.q_at_ymax - FRAC_PI_2).abs();
    let tail = (s.measured_gamma - s.gamma).abs() / s.gamma;
    Ok(Measured {
        passed: gap <= 1e-3 && tail <= 0.01 && s.min_lam_q > 0.0,
        value: tail,
        threshold: 0.01,
        detail: format!("|Q(y_max) − π/2| = {gap:e}, tail exponent {}, min ΛQ = {:e}", s.measured_gamma, s.min_lam_q),
    })
}

fn check_adjointness(d: usize, seed: u64) -> Result<Measured> {
    let ctx = context(d, 1e-3, 1e3, 4096)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..32 {
        let u = bump(ctx.grid(), rng.random_range(-1.0..2.0), rng.random_range(0.4..1.0));
        let w = bump(ctx.grid(), rng.random_range(-1.0..2.0), rng.random_range(0.4..1.0));
        let au = apply_a(&ctx, &u)?;
        let lhs = inner_product(&au, &w)?;
        let rhs = inner_product(&u, &apply_astar(&ctx, &w)?)?;
        let scale = inner_product(&au, &au)?.sqrt() * inner_product(&w, &w)?.sqrt();
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    Ok(at_most(worst, 1e-7, "32 random pairs, n = 4096".into()))
}

fn check_tk(ctx: &OperatorContext) -> Result<Measured> {
    let gamma = ctx.pack().gamma;
    let tks = generate_tk(ctx, 4)?;
    let roundtrip = tks.roundtrip[..=3].iter().cloned().fold(0.0f64, f64::max);
    let mut tails_ok = true;
    for k in 1..=3 {
        let e = 2.0 * k as f64 - gamma;
        let tol = if e.abs() < 0.1 { 0.05 } else { 0.02 * e.abs() };
        tails_ok &= (tks.tail_exponents[k] - e).abs() < tol;
    }
    Ok(Measured {
        passed: roundtrip <= 1e-3 && tails_ok,
        value: roundtrip,
        threshold: 1e-3,
        detail: format!("tail exponents {:?}", &tks.tail_exponents[1..=3]),
    })
}

fn check_phi_m(d: usize) -> Result<Measured> {
    let ctx = context(d, 1e-3, 1e3, 6144)?;
    let tks = generate_tk(&ctx, 3)?;
    let phi = build_phi_m(&ctx, &tks, 20.0, 3)?;
    let worst = phi.orthogonality_residuals(&tks)?.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(at_most(worst, 1e-8, format!("M = 20, coefficients {:?}", phi.coeffs)))
}

fn check_coercivity(d: usize, seed: u64) -> Result<Measured> {
    let ctx = context(d, 1e-3, 1e3, 1024)?;
    let tks = generate_tk(&ctx, 2)?;
    let phi = build_phi_m(&ctx, &tks, 2.0, 1)?;
    let r = coercivity_probe(&ctx, &phi, 0, 64, seed)?;
    Ok(Measured {
        passed: r.min_ratio > 0.0,
        value: r.min_ratio,
        threshold: 0.0,
        detail: format!("64 samples, median ratio {:e}", r.median_ratio),
    })
}

fn check_sk(ctx: &OperatorContext) -> Result<Measured> {
    let tks = generate_tk(ctx, 2)?;
    let sks = build_sk(ctx, &tks, 2)?;
    let b = [2e-3, -3e-6];
    let mu: f64 = 0.37;
    let scaled = [mu * b[0], mu * mu * b[1]];
    let mut worst: f64 = 0.0;
    for (idx, s) in sks.s.iter().enumerate() {
        s.check_homogeneity()?;
        let k = idx as i32 + 2;
        let a = s.evaluate(&b)?;
        let c = s.evaluate(&scaled)?;
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for (x, z) in a.values().iter().zip(c.values()) {
            worst = worst.max((z - mu.powi(k) * x).abs() / scale);
        }
    }
    Ok(at_most(worst, 1e-13, format!("S_2 … S_4 under b_k → μ^k b_k, μ = {mu}")))
}

fn check_explicit(d: usize, fault: Option<Fault>) -> Result<Measured> {
    let gamma = gamma_exponent(d)?;
    let mut worst: f64 = 0.0;
    for ell in valid_ells(gamma) {
        let sys = mode_system(d, ell, 3, fault)?;
        for s in [10.0, 1e3] {
            worst = worst.max(explicit_residual(&sys, s)?);
        }
    }
    Ok(at_most(worst, 1e-14, format!("ℓ ∈ {:?}, s ∈ {{10, 1e3}}", valid_ells(gamma))))
}

fn check_linearization(d: usize) -> Result<Measured> {
    let gamma = gamma_exponent(d)?;
    let mut worst: f64 = 0.0;
    let mut counts = true;
    for ell in valid_ells(gamma) {
        let al = build_al(gamma, ell)?;
        let mut expect = expected_spectrum(gamma, ell);
        expect.sort_by(f64::total_cmp);
        for (a, b) in al.eigenvalues.iter().zip(&expect) {
            worst = worst.max((a - b).abs());
        }
        counts &= al.unstable_count() == ell - 1;
    }
    Ok(Measured {
        passed: worst <= 1e-10 && counts,
        value: worst,
        threshold: 1e-10,
        detail: format!("unstable counts {}", if counts { "ℓ − 1" } else { "wrong" }),
    })
}

fn check_rates(d: usize, fault: Option<Fault>) -> Result<Measured> {
    let gamma = gamma_exponent(d)?;
    let ell = valid_ells(gamma)[0];
    let sys = mode_system(d, ell, ell, fault)?;
    let s0 = 20.0;
    let traj = integrate_system(&sys, &explicit_solution(&sys, s0)?, s0, 1e9)?;
    let fit = traj.fit.ok_or_else(|| LabError::Range("no rate window".into()))?;
    let expect_t = ell as f64 / gamma;
    let expect_s = -(ell as f64) / (2.0 * ell as f64 - gamma);
    let err = ((fit.exponent_t / expect_t - 1.0).abs()).max((fit.exponent_s / expect_s - 1.0).abs());
    Ok(at_most(err, 0.01, format!("ℓ = {ell}: t-exponent {}, s-exponent {}", fit.exponent_t, fit.exponent_s)))
}

/// All checks for one dimension, in a fixed order.
pub fn verify_dimension(d: usize, seed: u64, fault: Option<Fault>) -> Vec<Check> {
    let mut out = vec![record("profile.gamma_exponent", d, check_gamma(d))];
    match context(d, 1e-4, 1e4, 2048) {
        Ok(ctx) => {
            out.push(record("profile.solve_q", d, check_profile(&ctx)));
            let w = wronskian_residual(ctx.pack());
            out.push(record("profile.wronskian", d, Ok(at_most(w, 1e-5, "n = 2048".into()))));
            out.push(record("operator.adjointness", d, check_adjointness(d, seed)));
            out.push(record("operator.tk_family", d, check_tk(&ctx)));
            out.push(record("operator.phi_m", d, check_phi_m(d)));
            out.push(record("operator.coercivity", d, check_coercivity(d, seed)));
        }
        Err(e) => out.push(record("profile.solve_q", d, Err(e))),
    }
    out.push(record("qb.sk_homogeneity", d, context(d, 1e-4, 1e5, 2304).and_then(|c| check_sk(&c))));
    out.push(record("modes.explicit_solution", d, check_explicit(d, fault)));
    out.push(record("modes.linearization", d, check_linearization(d)));
    out.push(record("modes.rates", d, check_rates(d, fault)));
    out
}

/// Runs every dimension, at most `threads` at a time, and collects the checks in input order.
pub fn verify_all(dims: &[usize], seed: u64, threads: usize, fault: Option<Fault>) -> Result<VerifyReport> {
    if dims.is_empty() {
        return Err(LabError::Usage("empty dimension list".into()));
    }
    if let Some(bad) = dims.iter().find(|&&d| d < 7) {
        return Err(LabError::Usage(format!("dimension {bad} below 7")));
    }
    let mut per_dim: Vec<Vec<Check>> = Vec::with_capacity(dims.len());
    for chunk in dims.chunks(threads.max(1)) {
        let results: Vec<Vec<Check>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&d| s.spawn(move || verify_dimension(d, seed, fault))).collect();
            handles
                .into_iter()
                .zip(chunk)
                .map(|(h, &d)| {
                    h.join().unwrap_or_else(|_| {
                        vec![record("verify.worker", d, Err(LabError::Internal("check panicked".into())))]
                    })
                })
                .collect()
        });
        per_dim.extend(results);
    }
    let checks: Vec<Check> = per_dim.into_iter().flatten().collect();
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { dims: dims.to_vec(), seed, fault, passed, checks })
}
