use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use super::output::{plotdata as write_plotdata, write_csv, write_json, write_trajectory};
use super::verify::verify_all as run_checks;
use super::{
    CheckOutcome, GlobalArgs, ModesArgs, OperatorArgs, PlotdataArgs, Produced, ProfileArgs, QbArgs, SimulateArgs,
    VerifyArgs,
};
use crate::error::{LabError, Result};
use crate::linop::{build_phi_m, generate_tk, OperatorContext, PhiMReport, TkSummary};
use crate::modes::{explicit_solution, integrate_system, ModeSystem, RateFit, StopReason};
use crate::numerics::{linear_fit, make_grid};
use crate::profile::{solve_q, ProfileSummary};
use crate::qb::{assemble_qb, build_sk, compute_psib, exact_law, PsiReport};
use crate::sim::{run_blowup, RateReport, SimConfig};

fn out_or(g: &GlobalArgs, default: &str) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// `dir/stem_suffix.ext` next to `path`.
fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn produced(outputs: Vec<PathBuf>, anchor: PathBuf) -> Produced {
    Produced { outputs, checks: Vec::new(), anchor }
}

pub(super) fn profile(a: &ProfileArgs, g: &GlobalArgs) -> Result<Produced> {
    let grid = make_grid(a.d, a.grid.y_min, a.grid.y_max, a.grid.n)?;
    let p = solve_q(&grid)?;
    let out = out_or(g, &format!("profile_d{}.csv", a.d));
    let header: Vec<String> = ["y", "Q", "LamQ", "V", "Z", "Gamma"].iter().map(|s| s.to_string()).collect();
    let cols = [&p.q, &p.lam_q, &p.v, &p.z, &p.gamma_fn];
    write_csv(
        &out,
        &header,
        grid.nodes()
            .iter()
            .enumerate()
            .map(|(i, &y)| std::iter::once(y).chain(cols.iter().map(|c| c.values()[i])).collect()),
    )?;
    Ok(produced(vec![out.clone()], out))
}

#[derive(Serialize)]
struct OperatorReport {
    d: usize,
    gamma: f64,
    tk: Vec<TkSummary>,
    phi_m: PhiMReport,
    /// ⟨𝓛^i T_k, Φ_M⟩ for 0 ≤ i, k ≤ L.
    identity_matrix: Vec<Vec<f64>>,
}

pub(super) fn operator(a: &OperatorArgs, g: &GlobalArgs) -> Result<Produced> {
    if a.k < a.l {
        return Err(LabError::Usage(format!("--K {} must be at least --L {}", a.k, a.l)));
    }
    let grid = make_grid(a.d, a.y_min, a.y_max, a.n)?;
    let ctx = OperatorContext::new(Arc::new(solve_q(&grid)?));
    let tks = generate_tk(&ctx, a.k)?;
    let phi = build_phi_m(&ctx, &tks, a.m, a.l)?;
    let out = out_or(g, &format!("tk_d{}.csv", a.d));
    let mut header = vec!["y".to_string()];
    header.extend((0..=a.k).map(|k| format!("T_{k}")));
    write_csv(
        &out,
        &header,
        grid.nodes()
            .iter()
            .enumerate()
            .map(|(i, &y)| std::iter::once(y).chain(tks.t.iter().map(|t| t.values()[i])).collect()),
    )?;
    let json = sibling(&out, "_phim", "json");
    let report = OperatorReport {
        d: a.d,
        gamma: ctx.pack().gamma,
        tk: tks.summary(ctx.pack().gamma),
        phi_m: phi.report(&tks)?,
        identity_matrix: phi.identity_matrix(&tks)?,
    };
    write_json(&json, &report)?;
    Ok(produced(vec![out.clone(), json], out))
}

#[derive(Serialize)]
struct QbReport {
    d: usize,
    ell: usize,
    l: usize,
    profile: ProfileSummary,
    report: PsiReport,
    /// b_1 samples of the exponent fits, log-spaced over [b1, 10 b1].
    fit_b1: Vec<f64>,
    /// Fitted b_1-exponent of each weighted norm, m = 0 … L.
    exponents: Vec<f64>,
    exponents_global: Vec<f64>,
    /// 2m + 4 + 2(1 − δ).
    reference_exponents: Vec<f64>,
}

pub(super) fn qb(a: &QbArgs, g: &GlobalArgs) -> Result<Produced> {
    if !(a.b1 > 0.0 && a.b1 < 0.1) {
        return Err(LabError::Usage(format!("--b1 {} outside (0, 0.1)", a.b1)));
    }
    let sys = ModeSystem::new(a.d, a.ell, a.l)?;
    let grid = make_grid(a.d, a.y_min, a.y_max, a.n)?;
    let ctx = OperatorContext::new(Arc::new(solve_q(&grid)?));
    let tks = Arc::new(generate_tk(&ctx, a.l)?);
    let sks = Arc::new(build_sk(&ctx, &tks, a.l)?);
    let at = |b1: f64| -> Result<PsiReport> {
        let b = explicit_solution(&sys, sys.c[0] / b1)?;
        let p = assemble_qb(&ctx, tks.clone(), sks.clone(), &b, a.eta)?;
        Ok(compute_psib(&p, &exact_law(&b, sys.gamma))?.1)
    };
    let report = at(a.b1)?;
    let fit_b1: Vec<f64> = (0..6).map(|i| a.b1 * 10f64.powf(i as f64 / 5.0)).collect();
    let samples = fit_b1.iter().map(|&b| at(b)).collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = fit_b1.iter().map(|b| b.ln()).collect();
    let slope = |f: &dyn Fn(&PsiReport) -> f64| -> f64 {
        let ly: Vec<f64> = samples.iter().map(|r| f(r).ln()).collect();
        linear_fit(&lx, &ly).map(|f| f.slope).unwrap_or(f64::NAN)
    };
    let exponents = (0..=a.l).map(|m| slope(&|r: &PsiReport| r.weighted_norms[m])).collect();
    let exponents_global = (0..=a.l).map(|m| slope(&|r: &PsiReport| r.weighted_norms_global[m])).collect();
    let delta = ctx.pack().delta;
    let out = out_or(g, "qb_report.json");
    write_json(
        &out,
        &QbReport {
            d: a.d,
            ell: a.ell,
            l: a.l,
            profile: ctx.pack().summary()?,
            report,
            fit_b1,
            exponents,
            exponents_global,
            reference_exponents: (0..=a.l).map(|m| 2.0 * m as f64 + 4.0 + 2.0 * (1.0 - delta)).collect(),
        },
    )?;
    Ok(produced(vec![out.clone()], out))
}

#[derive(Serialize)]
struct ModesSummary {
    system: ModeSystem,
    s0: f64,
    s1: f64,
    stop: StopReason,
    fit: Option<RateFit>,
    expected_exponent_t: f64,
    expected_exponent_s: f64,
}

pub(super) fn modes(a: &ModesArgs, g: &GlobalArgs) -> Result<Produced> {
    let sys = ModeSystem::new(a.d, a.ell, a.l)?;
    let traj = integrate_system(&sys, &explicit_solution(&sys, a.s0)?, a.s0, a.s1)?;
    let out = out_or(g, "modes.csv");
    let mut header: Vec<String> = ["s", "t", "lambda"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=a.l).map(|k| format!("b_{k}")));
    write_csv(
        &out,
        &header,
        (0..traj.s.len()).map(|i| {
            let mut v = vec![traj.s[i], traj.t[i], traj.lambda[i]];
            v.extend(traj.b(&sys, i));
            v
        }),
    )?;
    let json = sibling(&out, "_fit", "json");
    let ell = a.ell as f64;
    let summary = ModesSummary {
        s0: a.s0,
        s1: a.s1,
        stop: traj.stop,
        fit: traj.fit.clone(),
        expected_exponent_t: ell / sys.gamma,
        expected_exponent_s: -ell / (2.0 * ell - sys.gamma),
        system: sys,
    };
    write_json(&json, &summary)?;
    Ok(produced(vec![out.clone(), json], out))
}

pub(super) fn simulate(a: &SimulateArgs, g: &GlobalArgs) -> Result<(SimConfig, Produced)> {
    let text = fs::read_to_string(&a.config).map_err(|e| LabError::File(format!("{}: {e}", a.config.display())))?;
    let mut cfg = SimConfig::parse(&text)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    let dir = out_or(g, "run");
    fs::create_dir_all(&dir).map_err(|e| LabError::File(format!("{}: {e}", dir.display())))?;
    let run = run_blowup(cfg.clone())?;
    let traj = dir.join("trajectory.csv");
    write_trajectory(&traj, &run.rows, cfg.l)?;
    let report = dir.join("rate_report.json");
    write_json(&report, &run.report)?;
    let mut outputs = vec![traj, report];
    if !run.frames.is_empty() {
        let y = make_grid(cfg.d, cfg.y_min, cfg.y_max, cfg.n)?;
        for f in &run.frames {
            let path = dir.join("frames").join(format!("frame_{:06}.csv", f.step));
            write_csv(&path, &["y".into(), "w".into()], y.nodes().iter().zip(&f.w).map(|(y, w)| vec![*y, *w]))?;
            outputs.push(path);
        }
    }
    let rep: &RateReport = &run.report;
    eprintln!(
        "{:?}: exponent {:.6} (expected {:.6}), T = {:.9e}, {} steps",
        rep.outcome, rep.exponent, rep.expected_exponent, rep.t_blowup, rep.steps
    );
    Ok((cfg, produced(outputs, dir)))
}

pub(super) fn plotdata(a: &PlotdataArgs, g: &GlobalArgs) -> Result<Produced> {
    let out = g.out.clone().unwrap_or_else(|| a.run_dir.clone());
    fs::create_dir_all(&out).map_err(|e| LabError::File(format!("{}: {e}", out.display())))?;
    let files = write_plotdata(&a.run_dir, &out)?;
    Ok(produced(files, out))
}

pub(super) fn verify_all(a: &VerifyArgs, g: &GlobalArgs) -> Result<Produced> {
    let report = run_checks(&a.dims, g.seed(), g.threads, a.inject_fault)?;
    let out = out_or(g, "verify_report.json");
    write_json(&out, &report)?;
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("FAIL {} (d = {}): {}", c.name, c.d, c.detail);
    }
    let checks = report
        .checks
        .iter()
        .map(|c| CheckOutcome { name: format!("{}[d={}]", c.name, c.d), passed: c.passed })
        .collect();
    Ok(Produced { outputs: vec![out.clone()], checks, anchor: out })
}
