//! Stationary harmonic map Q and its derived background fields.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::numerics::{power_law_fit, Dopri5, GridFunction, RadialGrid};

/// γ = ½(d − 2 − √(d² − 8d + 8)).
pub fn gamma_exponent(d: usize) -> Result<f64> {
    if d < 7 {
        return Err(LabError::Domain(format!("d = {d} is below the supercritical range d >= 7")));
    }
    let d = d as f64;
    Ok(0.5 * (d - 2.0 - (d * d - 8.0 * d + 8.0).sqrt()))
}

/// (ħ, δ) with ½(d/2 − γ) = ħ + δ, δ ∈ (0, 1).
pub fn spectral_params(d: usize) -> Result<(i32, f64)> {
    let g = gamma_exponent(d)?;
    let k = 0.5 * (d as f64 / 2.0 - g);
    let hbar = k.floor();
    let delta = k - hbar;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LabError::Internal(format!("fractional part δ = {delta} is not in (0,1) for d = {d}")));
    }
    Ok((hbar as i32, delta))
}

/// Q and derived fields on a fixed grid.
#[derive(Debug, Clone)]
pub struct ProfilePack {
    pub d: usize,
    pub gamma: f64,
    pub a0: f64,
    pub hbar: i32,
    pub delta: f64,
    pub q: GridFunction,
    /// π/2 − Q, kept separately for relative accuracy in the tail.
    pub q_deficit: GridFunction,
    pub lam_q: GridFunction,
    pub v: GridFunction,
    /// ΛV from the profile equation.
    pub lam_v: GridFunction,
    pub z: GridFunction,
    pub ztilde: GridFunction,
    pub gamma_fn: GridFunction,
}

/// Scalar summary of a profile, used in reports.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileSummary {
    pub d: usize,
    pub gamma: f64,
    pub a0: f64,
    pub measured_gamma: f64,
    pub hbar: i32,
    pub delta: f64,
    pub q_at_ymax: f64,
    pub min_lam_q: f64,
}

impl ProfilePack {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.q.grid()
    }

    pub fn summary(&self) -> Result<ProfileSummary> {
        let (_, mg) = fit_tail(self)?;
        Ok(ProfileSummary {
            d: self.d,
            gamma: self.gamma,
            a0: self.a0,
            measured_gamma: mg,
            hbar: self.hbar,
            delta: self.delta,
            q_at_ymax: *self.q.values().last().unwrap(),
            min_lam_q: self.lam_q.values().iter().cloned().fold(f64::INFINITY, f64::min),
        })
    }
}

/// Integrates Q'' + (d−1)/y Q' − (d−1)/(2y²) sin 2Q = 0 outward from the series
/// Q = y + c₁y³ and samples Q, ΛQ, V, ΛV, Z, Z̃ and Γ on the grid.
pub fn solve_q(grid: &Arc<RadialGrid>) -> Result<ProfilePack> {
    let d = grid.d();
    if grid.y_max() < 1e3 {
        return Err(LabError::Parameter(format!("y_max = {} must be at least 1e3", grid.y_max())));
    }
    let gamma = gamma_exponent(d)?;
    let (hbar, delta) = spectral_params(d)?;
    let df = d as f64;
    let c1 = -(df - 1.0) / (3.0 * (df + 2.0));
    let y0 = grid.y_min();
    let q0 = y0 + c1 * y0.powi(3);
    let qx0 = y0 + 3.0 * c1 * y0.powi(3);
    // In x = ln y with v = π/2 − Q: v_xx + (d−2) v_x + (d−1)/2 sin 2v = 0.
    let rhs = |_: f64, s: &[f64], ds: &mut [f64]| {
        ds[0] = s[1];
        ds[1] = -(df - 2.0) * s[1] - 0.5 * (df - 1.0) * (2.0 * s[0]).sin();
    };
    let xs: Vec<f64> = grid.nodes().iter().map(|y| y.ln()).collect();
    let solver = Dopri5 { rtol: 1e-13, atol: 1e-300, max_steps: 5_000_000, h_init: Some(1e-4) };
    let sol = solver.solve(rhs, xs[0], &[FRAC_PI_2 - q0, -qx0], &xs)?;
    if sol.y.len() != xs.len() {
        return Err(LabError::Profile("integrator stopped before y_max".into()));
    }
    let n = grid.len();
    let mut q = vec![0.0; n];
    let mut deficit = vec![0.0; n];
    let mut lq = vec![0.0; n];
    let mut vv = vec![0.0; n];
    let mut lv = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut zt = vec![0.0; n];
    for (i, s) in sol.y.iter().enumerate() {
        let (w, wx) = (s[0], s[1]);
        let qi = FRAC_PI_2 - w;
        if !(qi.is_finite() && qi.abs() < std::f64::consts::PI) {
            return Err(LabError::Profile(format!("Q left (−π, π) at y = {}", grid.nodes()[i])));
        }
        let qx = -wx;
        let qxx = -(df - 2.0) * qx + 0.5 * (df - 1.0) * (2.0 * w).sin();
        let cos2q = -(2.0 * w).cos();
        let qxxx = -(df - 2.0) * qxx + (df - 1.0) * cos2q * qx;
        let v = qxx / qx;
        q[i] = qi;
        deficit[i] = w;
        lq[i] = qx;
        vv[i] = v;
        lv[i] = qxxx / qx - v * v;
        z[i] = (df - 1.0) * cos2q;
        zt[i] = (v + 1.0).powi(2) + (df - 2.0) * (v + 1.0) - lv[i];
    }
    if lq.iter().any(|v| *v <= 0.0) {
        return Err(LabError::Profile("ΛQ is not positive on the grid; refine the grid".into()));
    }
    let g = grid.clone();
    let mk = |v: Vec<f64>, p: Option<i32>| GridFunction::new(g.clone(), v, p);
    let mut pack = ProfilePack {
        d,
        gamma,
        a0: f64::NAN,
        hbar,
        delta,
        q: mk(q, Some(1)).with_tail(Some(0.0)),
        q_deficit: mk(deficit, Some(0)).with_tail(Some(-gamma)),
        lam_q: mk(lq, Some(1)).with_tail(Some(-gamma)),
        v: mk(vv, Some(0)).with_tail(Some(0.0)),
        lam_v: mk(lv, Some(2)),
        z: mk(z, Some(0)).with_tail(Some(0.0)),
        ztilde: mk(zt, Some(0)).with_tail(Some(0.0)),
        gamma_fn: GridFunction::zeros(grid, None),
    };
    pack.gamma_fn = build_gamma(&pack);
    pack.a0 = fit_tail(&pack)?.0;
    Ok(pack)
}

/// Power-law fit of π/2 − Q over the last decade: (a₀, measured γ).
pub fn fit_tail(pack: &ProfilePack) -> Result<(f64, f64)> {
    let g = pack.grid();
    let fit = power_law_fit(g.nodes(), pack.q_deficit.values(), g.y_max() / 10.0, g.y_max())?;
    if fit.rms > 1e-2 {
        return Err(LabError::TailFit(format!("log-log residual {} too large", fit.rms)));
    }
    Ok((fit.amplitude, -fit.exponent))
}

/// Γ = −ΛQ ∫_y^∞ dξ / (ξ^{d−1} ΛQ²), normalized so that Γ'ΛQ − Γ(ΛQ)' = y^{−(d−1)}.
pub fn build_gamma(pack: &ProfilePack) -> GridFunction {
    let g = pack.grid();
    let d = pack.d as i32;
    let integrand: Vec<f64> =
        g.nodes().iter().zip(pack.lam_q.values()).map(|(y, l)| 1.0 / (y.powi(d - 1) * l * l)).collect();
    let mut acc = g.cumulative_to_end(&integrand);
    let ymax = g.y_max();
    let tail = integrand[g.len() - 1] * ymax / (f64::from(d) - 2.0 - 2.0 * pack.gamma);
    for a in acc.iter_mut() {
        *a += tail;
    }
    let values = acc.iter().zip(pack.lam_q.values()).map(|(a, l)| -l * a).collect();
    GridFunction::new(g.clone(), values, Some(-(d - 1))).with_tail(Some(-(f64::from(d) - 2.0 - pack.gamma)))
}

/// max_y |Γ'ΛQ − Γ(ΛQ)' − y^{1−d}|·y^{d−1} on nodes away from the grid ends.
pub fn wronskian_residual(pack: &ProfilePack) -> f64 {
    let gp = pack.gamma_fn.differentiate(1);
    let g = pack.grid();
    let d = pack.d as i32;
    let n = g.len();
    let skip = 3;
    (skip..n - skip)
        .map(|i| {
            let y = g.nodes()[i];
            let lq = pack.lam_q.values()[i];
            let lq_y = pack.v.values()[i] * lq / y;
            let w = gp.values()[i] * lq - pack.gamma_fn.values()[i] * lq_y;
            (w * y.powi(d - 1) - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// max_y |Z − (V² + ΛV + (d−2)V)| with ΛV from finite differences.
pub fn potential_identity_residual(pack: &ProfilePack) -> f64 {
    let lv = pack.v.lambda();
    let df = pack.d as f64;
    let n = pack.grid().len();
    (3..n - 3)
        .map(|i| {
            let v = pack.v.values()[i];
            (pack.z.values()[i] - (v * v + lv.values()[i] + (df - 2.0) * v)).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_grid;

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_exponent(7).unwrap(), 2.0);
        assert!((gamma_exponent(8).unwrap() - (3.0 - 2f64.sqrt())).abs() < 1e-15);
        assert!((gamma_exponent(100).unwrap() - 1.020838).abs() < 1e-6);
        assert!(matches!(gamma_exponent(6), Err(LabError::Domain(_))));
    }

    #[test]
    fn spectral_param_values() {
        let (h, dl) = spectral_params(7).unwrap();
        assert_eq!(h, 0);
        assert!((dl - 0.75).abs() < 1e-15);
        let (h, dl) = spectral_params(8).unwrap();
        assert_eq!(h, 1);
        assert!((dl - 0.207107).abs() < 1e-6);
        let (h, dl) = spectral_params(11).unwrap();
        assert_eq!(h, 2);
        assert!((dl - 0.100781).abs() < 1e-6);
    }

    #[test]
    fn profile_d7_basic_shape() {
        let g = make_grid(7, 1e-4, 1e4, 2048).unwrap();
        let p = solve_q(&g).unwrap();
        let q = p.q.values();
        assert!(q.windows(2).all(|w| w[1] > w[0]));
        assert!((q[q.len() - 1] - FRAC_PI_2).abs() < 1e-3);
        assert!((q[0] / g.y_min() - 1.0).abs() < 1e-6);
        assert!(p.lam_q.values().iter().all(|v| *v > 0.0));
        let (a0, mg) = fit_tail(&p).unwrap();
        assert!(a0 > 0.0);
        assert!((mg - 2.0).abs() < 0.02);
    }
}
