use serde::Serialize;

use super::{OperatorContext, TkFamily};
use crate::error::{LabError, Result};
use crate::numerics::dd::{self, Dd};
use crate::numerics::jet::{chi_jet, profile_deficit_jet, Jet};
use crate::numerics::GridFunction;

/// Φ_M = Σ_k c_{k,M} 𝓛^k(χ_M ΛQ) with ⟨Φ_M, T_k⟩ = 0 for 1 ≤ k ≤ L.
#[derive(Debug, Clone)]
pub struct PhiMDirection {
    pub m: f64,
    pub l: usize,
    /// c_{0,M} … c_{L,M}, from the full orthogonality system.
    pub coeffs: Vec<f64>,
    /// Same coefficients from the triangular recurrence.
    pub recurrence_coeffs: Vec<f64>,
    /// ⟨χ_M ΛQ, ΛQ⟩.
    pub norm: f64,
    pub phi: GridFunction,
    /// Low-order parts of Φ_M in double-double representation.
    phi_lo: Vec<f64>,
    /// 𝓛^i Φ_M for i = 0 … L.
    pub l_phi: Vec<GridFunction>,
    /// 𝓛^j(χ_M ΛQ) for j = 0 … 2L.
    pub generators: Vec<GridFunction>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiMReport {
    pub m: f64,
    pub l: usize,
    pub coeffs: Vec<f64>,
    pub recurrence_coeffs: Vec<f64>,
    pub norm: f64,
    /// ⟨Φ_M, T_k⟩ / ⟨Φ_M, ΛQ⟩ for k = 1 … L.
    pub orthogonality: Vec<f64>,
}

impl PhiMDirection {
    /// ⟨Φ_M, f⟩ accumulated in double-double.
    pub fn inner(&self, f: &GridFunction) -> Result<f64> {
        self.phi.check_grid(f)?;
        let w = self.phi.grid().weights();
        let hi = dd::dot3(w, self.phi.values(), f.values());
        let lo = dd::dot3(w, &self.phi_lo, f.values());
        Ok((hi + lo).to_f64())
    }

    /// ⟨Φ_M, T_k⟩ / ⟨Φ_M, ΛQ⟩ for k = 1 … L.
    pub fn orthogonality_residuals(&self, tks: &TkFamily) -> Result<Vec<f64>> {
        let base = self.inner(&tks.t[0])?;
        (1..=self.l).map(|k| Ok(self.inner(&tks.t[k])? / base)).collect()
    }

    /// Matrix ⟨𝓛^i T_k, Φ_M⟩ for 0 ≤ i, k ≤ L using 𝓛T_k = −T_{k−1}.
    pub fn identity_matrix(&self, tks: &TkFamily) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![vec![0.0; self.l + 1]; self.l + 1];
        for (i, row) in out.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                if i <= k {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    *v = sign * self.inner(&tks.t[k - i])?;
                }
            }
        }
        Ok(out)
    }

    pub fn report(&self, tks: &TkFamily) -> Result<PhiMReport> {
        Ok(PhiMReport {
            m: self.m,
            l: self.l,
            coeffs: self.coeffs.clone(),
            recurrence_coeffs: self.recurrence_coeffs.clone(),
            norm: self.norm,
            orthogonality: self.orthogonality_residuals(tks)?,
        })
    }
}

/// 𝓛^j(χ_M ΛQ) for j = 0 … jmax, evaluated pointwise from Taylor jets in x = ln y.
pub fn cutoff_generators(ctx: &OperatorContext, m: f64, jmax: usize) -> Vec<GridFunction> {
    let p = ctx.pack();
    let d = ctx.d() as f64;
    let deg = 2 * jmax + 1;
    let grid = ctx.grid().clone();
    let n = grid.len();
    let mut out = vec![vec![0.0; n]; jmax + 1];
    for (i, &y) in grid.nodes().iter().enumerate() {
        let t0 = y / m;
        if t0 <= 1.0 {
            out[0][i] = p.lam_q.values()[i];
            continue;
        }
        if t0 >= 2.0 {
            continue;
        }
        let v = profile_deficit_jet(p.q_deficit.values()[i], -p.lam_q.values()[i], d, deg);
        let lq = -&v.derivative();
        let z = (v.scale(2.0).sin_cos().1).scale(-(d - 1.0));
        let eps = Jet::variable(0.0, deg);
        let t = eps.exp().scale(t0);
        let inv_y2 = eps.scale(-2.0).exp().scale(1.0 / (y * y));
        let mut g = &chi_jet(&t) * &lq;
        out[0][i] = g.value();
        for row in out.iter_mut().skip(1) {
            let g1 = g.derivative();
            let g2 = g1.derivative();
            let inner = &(&(&z * &g) - &g1.scale(d - 2.0)) - &g2;
            g = &inv_y2 * &inner;
            row[i] = g.value();
        }
    }
    out.into_iter().map(|v| GridFunction::new(grid.clone(), v, Some(1))).collect()
}

pub fn build_phi_m(ctx: &OperatorContext, tks: &TkFamily, m: f64, l: usize) -> Result<PhiMDirection> {
    if 2.0 * m > ctx.grid().y_max() {
        return Err(LabError::Parameter(format!("2M = {} exceeds y_max", 2.0 * m)));
    }
    if l > tks.k_max() {
        return Err(LabError::Parameter(format!("L = {l} exceeds the T_k family size {}", tks.k_max())));
    }
    let gens = cutoff_generators(ctx, m, 2 * l);
    let w = ctx.grid().weights();
    let ip = |a: &GridFunction, b: &GridFunction| dd::dot3(w, a.values(), b.values());
    let norm_dd = ip(&gens[0], &tks.t[0]);
    let norm = norm_dd.to_f64();
    if norm.abs() < 1e-300 {
        return Err(LabError::Construction("⟨χ_M ΛQ, ΛQ⟩ vanishes".into()));
    }
    let mut coeffs_dd = vec![Dd::new(1.0)];
    let mut recurrence = vec![Dd::new(1.0)];
    if l > 0 {
        let gm: Vec<Vec<Dd>> = (1..=l).map(|k| (1..=l).map(|j| ip(&gens[j], &tks.t[k])).collect()).collect();
        let rhs: Vec<Dd> = (1..=l).map(|k| -ip(&gens[0], &tks.t[k])).collect();
        let sol = dd::solve(gm, rhs).ok_or_else(|| LabError::Construction("singular orthogonality system".into()))?;
        coeffs_dd.extend(sol);
        for k in 1..=l {
            let mut s = Dd::ZERO;
            for (j, c) in recurrence.iter().enumerate() {
                s = s + *c * ip(&gens[j], &tks.t[k]);
            }
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            recurrence.push(Dd::new(sign) * s / norm_dd);
        }
    }
    let coeffs: Vec<f64> = coeffs_dd.iter().map(|c| c.to_f64()).collect();
    let n = ctx.grid().len();
    let mut phi_hi = vec![0.0; n];
    let mut phi_lo = vec![0.0; n];
    for i in 0..n {
        let mut s = Dd::ZERO;
        for (j, c) in coeffs_dd.iter().enumerate() {
            s = s + *c * Dd::new(gens[j].values()[i]);
        }
        phi_hi[i] = s.hi;
        phi_lo[i] = s.lo;
    }
    let combine = |shift: usize| -> GridFunction {
        let mut acc = gens[shift].scale(coeffs[0]);
        for (j, c) in coeffs.iter().enumerate().skip(1) {
            acc.axpy(*c, &gens[j + shift]);
        }
        acc
    };
    let mut l_phi: Vec<GridFunction> = (0..=l).map(combine).collect();
    l_phi[0] = GridFunction::new(ctx.grid().clone(), phi_hi, Some(1));
    Ok(PhiMDirection {
        m,
        l,
        coeffs,
        recurrence_coeffs: recurrence.iter().map(|c| c.to_f64()).collect(),
        norm,
        phi: l_phi[0].clone(),
        phi_lo,
        l_phi,
        generators: gens,
    })
}
