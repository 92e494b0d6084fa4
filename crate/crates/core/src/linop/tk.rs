use serde::Serialize;

use super::{apply_l, invert_l_full, OperatorContext};
use crate::error::{LabError, Result};
use crate::numerics::{fit::envelope_exponent, GridFunction};

/// Kernel iterates T_0 = ΛQ, T_{k+1} = −𝓛⁻¹T_k with their 𝓐-images.
#[derive(Debug, Clone)]
pub struct TkFamily {
    pub t: Vec<GridFunction>,
    /// 𝓐T_k from the inversion formula.
    pub a_t: Vec<GridFunction>,
    /// U_k = ΛT_k − (2k−γ)T_k from 𝓛U_{k+1} = −U_k − (ΛZ/y²)T_{k+1}, U_0 = (V+γ)ΛQ.
    pub u: Vec<GridFunction>,
    pub tail_exponents: Vec<f64>,
    /// max relative |𝓛T_{k+1} + T_k| / |T_k| on [y_min, y_max/10], index k.
    pub roundtrip: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TkSummary {
    pub k: usize,
    pub tail_exponent: f64,
    pub expected_tail_exponent: f64,
    pub roundtrip_residual: f64,
}

impl TkFamily {
    pub fn k_max(&self) -> usize {
        self.t.len() - 1
    }

    /// ΛT_k = V T_k − y 𝓐T_k, free of differentiation error.
    pub fn lam_t(&self, ctx: &OperatorContext, k: usize) -> GridFunction {
        let v = ctx.pack().v.values();
        let t = &self.t[k];
        let a = self.a_t[k].values();
        t.map_with_y_index(|i, y, tv| v[i] * tv - y * a[i])
    }

    pub fn summary(&self, gamma: f64) -> Vec<TkSummary> {
        (0..self.t.len())
            .map(|k| TkSummary {
                k,
                tail_exponent: self.tail_exponents[k],
                expected_tail_exponent: 2.0 * k as f64 - gamma,
                roundtrip_residual: if k < self.roundtrip.len() { self.roundtrip[k] } else { f64::NAN },
            })
            .collect()
    }
}

/// Builds T_0 … T_K and verifies 𝓛T_{k+1} = −T_k.
pub fn generate_tk(ctx: &OperatorContext, k_max: usize) -> Result<TkFamily> {
    if k_max < 1 {
        return Err(LabError::Parameter("K must be at least 1".into()));
    }
    let lq = ctx.pack().lam_q.clone();
    let mut t = vec![lq.clone()];
    let mut a_t = vec![GridFunction::zeros(ctx.grid(), Some(2))];
    for _ in 0..k_max {
        let inv = invert_l_full(ctx, t.last().unwrap())?;
        t.push(inv.w.scale(-1.0));
        a_t.push(inv.a_w.scale(-1.0));
    }
    let g = ctx.grid();
    let ymax = g.y_max();
    let mut tails = Vec::with_capacity(t.len());
    for (k, tk) in t.iter_mut().enumerate() {
        let q = match tk.fit_tail() {
            Ok((_, q)) => q,
            Err(_) => envelope_exponent(g.nodes(), tk.values(), ymax / 10.0, ymax).unwrap_or(f64::NAN),
        };
        if !tk.is_finite() {
            return Err(LabError::Inversion(format!("T_{k} overflowed; reduce K or y_max")));
        }
        tails.push(q);
        *tk = tk.clone().with_origin(Some(2 * k as i32 + 1)).with_tail(Some(q));
    }
    for (k, a) in a_t.iter_mut().enumerate() {
        *a = a.clone().with_origin(Some(2 * k as i32));
    }
    let mut roundtrip = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let r = apply_l(ctx, &t[k + 1])?;
        let hi = g.index_at_or_above(ymax / 10.0);
        let res = (0..hi).map(|i| ((r.values()[i] + t[k].values()[i]) / t[k].values()[i]).abs()).fold(0.0, f64::max);
        roundtrip.push(res);
    }
    let gamma = ctx.pack().gamma;
    let v = ctx.pack().v.values();
    let lz = ctx.lam_z().values();
    let mut u = vec![t[0].map_with_y_index(|i, _, l| (v[i] + gamma) * l).with_origin(Some(1))];
    for k in 0..k_max {
        let src = u[k].map_with_y_index(|i, y, x| x + lz[i] / (y * y) * t[k + 1].values()[i]);
        let w = invert_l_full(ctx, &src.with_origin(Some(2 * k as i32 + 1)))?.w.scale(-1.0);
        u.push(w.with_origin(Some(2 * k as i32 + 3)));
    }
    Ok(TkFamily { t, a_t, u, tail_exponents: tails, roundtrip })
}
