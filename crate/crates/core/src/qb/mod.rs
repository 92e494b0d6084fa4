//! Approximate blowup profile Q_b = Q + Σ b_k T_k + Σ S_k, its localization
//! at B₁, the modulation vector and the residual Ψ̃_b.

mod monomial;
mod sk;

use std::sync::Arc;

use serde::Serialize;

pub use monomial::{weighted_degree, MonomialExpansion};
pub use sk::{build_sk, sine_taylor_coefficients, SkFamily};

use crate::error::{LabError, Result};
use crate::linop::{apply_l, OperatorContext, TkFamily};
use crate::numerics::jet::Jet;
use crate::numerics::{chi, chi_derivs, GridFunction};

/// Default localization exponent in B₁ = B₀^{1+η}.
pub const DEFAULT_ETA: f64 = 0.5;
/// Constant C in the a priori bound |b_k| ≤ C b_1^k.
pub const APRIORI_CONSTANT: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct ApproximateProfile {
    pub ctx: OperatorContext,
    pub tks: Arc<TkFamily>,
    pub sks: Arc<SkFamily>,
    pub b: Vec<f64>,
    pub eta: f64,
    /// B₀ = b_1^{−1/2} (infinite for b = 0).
    pub b0: f64,
    /// B₁ = B₀^{1+η}.
    pub b1_radius: f64,
    /// Θ_b = Q_b − Q, unlocalized.
    pub theta: GridFunction,
    /// ΛΘ_b, assembled from the exact Λ-images of T_k and S_k.
    pub lam_theta: GridFunction,
    /// θ_i(b), the weighted-degree-i parts of Θ_b, i = 1 … L+2.
    pub theta_parts: Vec<GridFunction>,
    pub qb: GridFunction,
    pub qb_localized: GridFunction,
}

impl ApproximateProfile {
    pub fn l(&self) -> usize {
        self.sks.l
    }

    /// χ_{B₁} on the grid (identically 1 for b = 0).
    pub fn cutoff(&self) -> Vec<f64> {
        self.ctx.grid().nodes().iter().map(|&y| self.chi_at(y)).collect()
    }

    fn chi_at(&self, y: f64) -> f64 {
        if self.b1_radius.is_finite() {
            chi(y / self.b1_radius)
        } else {
            1.0
        }
    }

    /// Q̃_b − Q.
    pub fn theta_localized(&self) -> GridFunction {
        self.theta.map_with_y(|y, t| self.chi_at(y) * t)
    }
}

/// Evaluates Q_b and Q̃_b at b.
pub fn assemble_qb(
    ctx: &OperatorContext,
    tks: Arc<TkFamily>,
    sks: Arc<SkFamily>,
    b: &[f64],
    eta: f64,
) -> Result<ApproximateProfile> {
    assemble(ctx, tks, sks, b, eta, true)
}

/// As [`assemble_qb`] for arbitrary b near 0, as met by Newton iterates: no a priori bound,
/// B₁ = |b_1|^{−(1+η)/2}, and χ_{B₁} ≡ 1 once 2B₁ exceeds y_max.
pub fn assemble_qb_relaxed(
    ctx: &OperatorContext,
    tks: Arc<TkFamily>,
    sks: Arc<SkFamily>,
    b: &[f64],
    eta: f64,
) -> Result<ApproximateProfile> {
    assemble(ctx, tks, sks, b, eta, false)
}

fn assemble(
    ctx: &OperatorContext,
    tks: Arc<TkFamily>,
    sks: Arc<SkFamily>,
    b: &[f64],
    eta: f64,
    strict: bool,
) -> Result<ApproximateProfile> {
    let l = sks.l;
    if b.len() != l {
        return Err(LabError::Parameter(format!("expected {l} modulation parameters, got {}", b.len())));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(LabError::Parameter(format!("η = {eta} outside (0, 1)")));
    }
    let b1 = b[0];
    if strict {
        if b1 < 0.0 {
            return Err(LabError::Parameter(format!("b_1 = {b1} must be nonnegative")));
        }
        for (k, bk) in b.iter().enumerate().skip(1) {
            if bk.abs() > APRIORI_CONSTANT * b1.powi(k as i32 + 1) {
                return Err(LabError::Parameter(format!("|b_{}| = {} violates |b_k| ≤ C b_1^k", k + 1, bk.abs())));
            }
        }
    }
    let (b0, mut b1r) = if b1 != 0.0 {
        let b0 = b1.abs().powf(-0.5);
        (b0, b0.powf(1.0 + eta))
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    if 2.0 * b1r > ctx.grid().y_max() && b1r.is_finite() {
        if strict {
            return Err(LabError::Range(format!(
                "2B₁ = {:.4e} exceeds y_max = {:.4e}; b_1 too small for this grid",
                2.0 * b1r,
                ctx.grid().y_max()
            )));
        }
        b1r = f64::INFINITY;
    }
    let g = ctx.grid().clone();
    let n = g.len();
    let v = ctx.pack().v.values();
    let y = g.nodes();
    let mut parts = Vec::with_capacity(l + 2);
    let mut theta = vec![0.0; n];
    let mut lam_theta = vec![0.0; n];
    for i in 1..=l + 2 {
        let mut part = vec![0.0; n];
        if i <= l && b[i - 1] != 0.0 {
            let lt = tks.lam_t(ctx, i);
            for j in 0..n {
                part[j] += b[i - 1] * tks.t[i].values()[j];
                lam_theta[j] += b[i - 1] * lt.values()[j];
            }
        }
        if let Some(s) = sks.get(i) {
            let sv = s.evaluate(b)?;
            let av = sks.a_s[i - 2].evaluate(b)?;
            for j in 0..n {
                part[j] += sv.values()[j];
                lam_theta[j] += v[j] * sv.values()[j] - y[j] * av.values()[j];
            }
        }
        for j in 0..n {
            theta[j] += part[j];
        }
        parts.push(GridFunction::new(g.clone(), part, Some(2 * i as i32 + 1)));
    }
    let theta = GridFunction::new(g.clone(), theta, Some(3));
    let lam_theta = GridFunction::new(g.clone(), lam_theta, Some(3));
    let q = &ctx.pack().q;
    let qb = q.add(&theta);
    let chi_b1 = |y: f64| if b1r.is_finite() { chi(y / b1r) } else { 1.0 };
    let qb_localized = q.add(&theta.map_with_y(|y, t| chi_b1(y) * t));
    Ok(ApproximateProfile {
        ctx: ctx.clone(),
        tks,
        sks,
        b: b.to_vec(),
        eta,
        b0,
        b1_radius: b1r,
        theta,
        lam_theta,
        theta_parts: parts,
        qb,
        qb_localized,
    })
}

/// Mod(t) = Σ_k [(b_k)_s + (2k−γ)b_1b_k − b_{k+1}] [T_k + Σ_{j>k} ∂S_j/∂b_k].
pub fn mod_vector(profile: &ApproximateProfile, b_s: &[f64]) -> Result<GridFunction> {
    let l = profile.l();
    if b_s.len() != l {
        return Err(LabError::Parameter(format!("expected {l} values of (b_k)_s, got {}", b_s.len())));
    }
    let gamma = profile.sks.gamma;
    let b = &profile.b;
    let mut out = GridFunction::zeros(profile.ctx.grid(), Some(3));
    for k in 1..=l {
        let next = if k < l { b[k] } else { 0.0 };
        let bracket = b_s[k - 1] + (2.0 * k as f64 - gamma) * b[0] * b[k - 1] - next;
        if bracket == 0.0 {
            continue;
        }
        out.axpy(bracket, &direction(profile, k)?);
    }
    Ok(out)
}

/// ∂Q_b/∂b_k = T_k + Σ_{j>k} ∂S_j/∂b_k at the profile's b.
fn direction(profile: &ApproximateProfile, k: usize) -> Result<GridFunction> {
    let mut dir = profile.tks.t[k].clone();
    for j in (k + 1).max(2)..=profile.l() + 2 {
        if let Some(s) = profile.sks.get(j) {
            dir = dir.add(&s.partial(k).evaluate(&profile.b)?);
        }
    }
    Ok(dir)
}

/// ∂Q̃_b/∂b_k for k = 1 … L, including the motion of χ_{B₁} with b_1.
pub fn parameter_derivatives(profile: &ApproximateProfile) -> Result<Vec<GridFunction>> {
    let chi_v = profile.cutoff();
    let b1 = profile.b[0];
    let mut out = Vec::with_capacity(profile.l());
    for k in 1..=profile.l() {
        let mut dir = direction(profile, k)?.map_with_y_index(|i, _, v| chi_v[i] * v);
        if k == 1 && b1 != 0.0 && profile.b1_radius.is_finite() {
            let br = profile.b1_radius;
            let f = (1.0 + profile.eta) / (2.0 * b1);
            let th = profile.theta.values();
            dir = dir.map_with_y_index(|i, y, v| {
                let t = y / br;
                v + chi_derivs(t).0 * t * f * th[i]
            });
        }
        out.push(dir);
    }
    Ok(out)
}

/// The exact b-system law (b_k)_s = −(2k−γ)b_1b_k + b_{k+1}.
pub fn exact_law(b: &[f64], gamma: f64) -> Vec<f64> {
    let l = b.len();
    (1..=l).map(|k| -(2.0 * k as f64 - gamma) * b[0] * b[k - 1] + if k < l { b[k] } else { 0.0 }).collect()
}

/// Σ_{i ≥ L+3} of the μ-graded Taylor coefficients of sin(2Q + 2Σ μ^i θ_i),
/// i.e. the nonlinear remainder R₁ + R₂ at μ = 1.
fn remainder_at_node(v: f64, theta: &[f64], cut: usize) -> f64 {
    const DEGREE: usize = 96;
    // sin(2Q + u) = sin(2v − u) with 2Q = π − 2v.
    let mut arg = Jet::constant(2.0 * v, DEGREE);
    for (i, t) in theta.iter().enumerate() {
        arg.c[i + 1] -= 2.0 * t;
    }
    let (s, _) = arg.sin_cos();
    let tail: f64 = s.c[cut..].iter().sum();
    let size: f64 = s.c[cut..].iter().map(|c| c.abs()).sum();
    let last = s.c[DEGREE].abs() + s.c[DEGREE - 1].abs();
    if last <= 1e-15 * size || size == 0.0 {
        return tail;
    }
    let total_arg = 2.0 * v - 2.0 * theta.iter().sum::<f64>();
    let head: f64 = s.c[..cut].iter().sum();
    total_arg.sin() - head
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiReport {
    pub b: Vec<f64>,
    pub eta: f64,
    pub b0: f64,
    pub b1_radius: f64,
    /// ∫_{y ≤ 2B₀} |Ψ̃_b|² / (1 + y^{4(ħ+m+1)}) for m = 0 … L.
    pub weighted_norms: Vec<f64>,
    /// Same weights over y ≤ 2B₁.
    pub weighted_norms_global: Vec<f64>,
    /// max |Mod| for the supplied law.
    pub mod_max: f64,
}

/// Ψ̃_b = χ_{B₁}(E_{L+2} + (d−1)/(2y²)(R₁+R₂)) + Ψ̂⁽¹⁾ + Ψ̂⁽²⁾ + Ψ̂⁽³⁾, assembled term
/// by term so that no O(b) quantities cancel.
pub fn compute_psib(profile: &ApproximateProfile, b_s: &[f64]) -> Result<(GridFunction, PsiReport)> {
    let ctx = &profile.ctx;
    let l = profile.l();
    let g = ctx.grid().clone();
    let n = g.len();
    let y = g.nodes();
    let df = ctx.d() as f64;
    let b = &profile.b;
    let b1 = b[0];
    let vq = ctx.pack().q_deficit.values();
    let lq = ctx.pack().lam_q.values();
    let e_top = profile.sks.e_top.evaluate(b)?;
    let theta = profile.theta.values();
    let lam_theta = profile.lam_theta.values();
    let parts: Vec<&[f64]> = profile.theta_parts.iter().map(|p| p.values()).collect();
    let mut psi = vec![0.0; n];
    let b1r = profile.b1_radius;
    let b1_s = b_s.first().copied().unwrap_or(0.0);
    for i in 0..n {
        let yi = y[i];
        let th: Vec<f64> = parts.iter().map(|p| p[i]).collect();
        let r = remainder_at_node(vq[i], &th, l + 3);
        let inner = e_top.values()[i] + 0.5 * (df - 1.0) / (yi * yi) * r;
        if !b1r.is_finite() {
            psi[i] = inner;
            continue;
        }
        let t = yi / b1r;
        let c = chi(t);
        let (c1, c2) = chi_derivs(t);
        let mut val = c * inner;
        val += b1 * (1.0 - c) * lq[i];
        if c > 0.0 && c < 1.0 {
            let delta = |x: f64| -2.0 * (x - 2.0 * vq[i]).cos() * x.sin();
            val += 0.5 * (df - 1.0) / (yi * yi) * (delta(c * theta[i]) - c * delta(theta[i]));
            let chi_y = c1 / b1r;
            let chi_yy = c2 / (b1r * b1r);
            let chi_s = if b1 > 0.0 { c1 * t * 0.5 * (1.0 + profile.eta) * b1_s / b1 } else { 0.0 };
            let lam_chi = t * c1;
            val += theta[i] * (chi_s - (chi_yy + (df - 1.0) / yi * chi_y) + b1 * lam_chi);
            val -= 2.0 * chi_y * lam_theta[i] / yi;
        }
        psi[i] = val;
    }
    let psi = GridFunction::new(g.clone(), psi, Some(2 * l as i32 + 5));
    let hbar = ctx.pack().hbar;
    let norms = |radius: f64| -> Vec<f64> {
        (0..=l)
            .map(|m| {
                let p = 4 * (hbar + m as i32 + 1);
                let vals: Vec<f64> = (0..n)
                    .map(|i| if y[i] <= radius { psi.values()[i].powi(2) / (1.0 + y[i].powi(p)) } else { 0.0 })
                    .collect();
                g.integrate(&vals, None)
            })
            .collect()
    };
    let md = mod_vector(profile, b_s)?;
    let report = PsiReport {
        b: b.clone(),
        eta: profile.eta,
        b0: profile.b0,
        b1_radius: b1r,
        weighted_norms: norms(2.0 * profile.b0),
        weighted_norms_global: norms(2.0 * b1r),
        mod_max: md.max_abs(),
    };
    Ok((psi, report))
}

/// Literal residual ∂_sQ̃_b − ∂_yyQ̃_b − ((d−1)/y)∂_yQ̃_b + b_1ΛQ̃_b + (d−1)/(2y²) sin 2Q̃_b − χ_{B₁}Mod
/// with grid stencils; limited by finite-difference accuracy.
pub fn compute_psib_stencil(profile: &ApproximateProfile, b_s: &[f64]) -> Result<GridFunction> {
    let ctx = &profile.ctx;
    let l = profile.l();
    let g = ctx.grid().clone();
    let y = g.nodes();
    let df = ctx.d() as f64;
    let b = &profile.b;
    let b1 = b[0];
    let vq = ctx.pack().q_deficit.values();
    let th = profile.theta_localized();
    let d1 = g.dx_k(th.values(), 1, Some(3));
    let d2 = g.dx_k(th.values(), 2, Some(3));
    let cut = profile.cutoff();
    // ∂_sΘ̃ = χ Σ_k (b_k)_s ∂Θ/∂b_k + ∂_sχ Θ.
    let mut ds = vec![0.0; g.len()];
    for k in 1..=l {
        let mut dir = profile.tks.t[k].clone();
        for j in 2..=l + 2 {
            if let Some(s) = profile.sks.get(j) {
                dir = dir.add(&s.partial(k).evaluate(b)?);
            }
        }
        for i in 0..ds.len() {
            ds[i] += b_s[k - 1] * cut[i] * dir.values()[i];
        }
    }
    let md = mod_vector(profile, b_s)?;
    let theta = profile.theta.values();
    let out: Vec<f64> = (0..g.len())
        .map(|i| {
            let yi = y[i];
            let mut chi_s = 0.0;
            if profile.b1_radius.is_finite() && b1 > 0.0 {
                let t = yi / profile.b1_radius;
                chi_s = chi_derivs(t).0 * t * 0.5 * (1.0 + profile.eta) * b_s[0] / b1;
            }
            let x = th.values()[i];
            let lap = (d2[i] + (df - 2.0) * d1[i]) / (yi * yi);
            let lam_qb = ctx.pack().lam_q.values()[i] + d1[i];
            let nonlinear = -2.0 * (x - 2.0 * vq[i]).cos() * x.sin();
            ds[i] + chi_s * theta[i] - lap + b1 * lam_qb + 0.5 * (df - 1.0) / (yi * yi) * nonlinear
                - cut[i] * md.values()[i]
        })
        .collect();
    Ok(GridFunction::new(g, out, Some(3)))
}

/// ∫_{y ≤ 2M} |𝓛^p Ψ̃_b|² with forward stencil applications.
pub fn local_sobolev_norm(ctx: &OperatorContext, psi: &GridFunction, m: f64, power: usize) -> Result<f64> {
    let mut f = psi.clone();
    for _ in 0..power {
        f = apply_l(ctx, &f)?;
    }
    let y = f.y().to_vec();
    let vals: Vec<f64> = f.values().iter().zip(&y).map(|(v, y)| if *y <= 2.0 * m { v * v } else { 0.0 }).collect();
    Ok(f.grid().integrate(&vals, None))
}
