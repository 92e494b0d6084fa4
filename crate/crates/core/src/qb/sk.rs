use crate::error::{LabError, Result};
use crate::linop::{invert_l_full, OperatorContext, TkFamily};
use crate::numerics::fit::envelope_exponent;
use crate::numerics::GridFunction;

use super::monomial::MonomialExpansion;

/// f^{(j)}(Q)/j! for f(x) = sin 2x and j = 0 … jmax, evaluated through the
/// deficit v = π/2 − Q to keep relative accuracy in the tail.
pub fn sine_taylor_coefficients(v: &[f64], jmax: usize) -> Vec<Vec<f64>> {
    let mut fact = 1.0;
    (0..=jmax)
        .map(|j| {
            if j > 0 {
                fact *= j as f64;
            }
            let scale = 2f64.powi(j as i32) / fact;
            v.iter()
                .map(|&v| {
                    let (s, c) = (2.0 * v).sin_cos();
                    let val = if j % 2 == 0 {
                        if (j / 2) % 2 == 0 {
                            s
                        } else {
                            -s
                        }
                    } else if ((j - 1) / 2) % 2 == 0 {
                        -c
                    } else {
                        c
                    };
                    scale * val
                })
                .collect()
        })
        .collect()
}

/// Correction profiles S_2 … S_{L+2} as homogeneous polynomials in b.
#[derive(Debug, Clone)]
pub struct SkFamily {
    pub l: usize,
    pub gamma: f64,
    /// S_k at index k − 2.
    pub s: Vec<MonomialExpansion>,
    /// 𝓐S_k at index k − 2, from the inversion formula.
    pub a_s: Vec<MonomialExpansion>,
    /// E_{L+2}, the part of the residual left after the last correction.
    pub e_top: MonomialExpansion,
    /// Fitted tail exponent of every coefficient, per S_k.
    pub tail_exponents: Vec<Vec<(Vec<u32>, f64)>>,
}

impl SkFamily {
    pub fn get(&self, k: usize) -> Option<&MonomialExpansion> {
        if k >= 2 {
            self.s.get(k - 2)
        } else {
            None
        }
    }

    /// ΛS_k = V S_k − y 𝓐S_k coefficientwise.
    pub fn lam_s(&self, ctx: &OperatorContext, k: usize) -> Option<MonomialExpansion> {
        let s = self.get(k)?;
        let a = &self.a_s[k - 2];
        let v = ctx.pack().v.values();
        let y = ctx.grid().nodes();
        let mut out = s.empty_like();
        for ((m, c), (_, ca)) in s.terms().zip(a.terms()) {
            let lc: Vec<f64> = (0..c.len()).map(|i| v[i] * c[i] - y[i] * ca[i]).collect();
            out.add_term(m.clone(), &lc);
        }
        Some(out)
    }
}

/// θ_i = b_i T_i + S_i, the weighted-degree-i part of Θ_b.
fn theta_part(tks: &TkFamily, s: &[MonomialExpansion], l: usize, i: usize) -> MonomialExpansion {
    let g = tks.t[0].grid();
    let mut out = MonomialExpansion::zero(g, l, (i, i as i32, i));
    if i <= l {
        out.add_assign(&MonomialExpansion::linear(g, l, i, tks.t[i].values()));
    }
    if i >= 2 && i - 2 < s.len() {
        out.add_assign(&s[i - 2]);
    }
    out
}

/// Σ_j [(2j − γ) b_1 b_j − b_{j+1}] ∂S/∂b_j.
fn law_derivative(s: &MonomialExpansion, l: usize, gamma: f64) -> MonomialExpansion {
    let mut out = MonomialExpansion::zero(s.grid(), l, (0, 0, s.degree.2 + 1));
    for j in 1..=l {
        let ds = s.partial(j);
        if ds.is_empty() {
            continue;
        }
        out.add_assign(&ds.times_b(1).times_b(j).scale(2.0 * j as f64 - gamma));
        if j < l {
            out.add_assign(&ds.times_b(j + 1).scale(-1.0));
        }
    }
    out
}

/// E_k for 1 ≤ k ≤ L + 2, given S_k (None for S_1 = 0) and its Λ-image.
fn e_k(
    ctx: &OperatorContext,
    tks: &TkFamily,
    k: usize,
    l: usize,
    sk: Option<(&MonomialExpansion, &MonomialExpansion)>,
) -> MonomialExpansion {
    let gamma = ctx.pack().gamma;
    let g = ctx.grid();
    let mut e = MonomialExpansion::zero(g, l, (k, k as i32 - 1, k + 1));
    if k <= l {
        e.add_assign(&MonomialExpansion::linear(g, l, k, tks.u[k].values()).times_b(1));
    }
    if let Some((s, lam_s)) = sk {
        e.add_assign(&lam_s.times_b(1));
        e.add_assign(&law_derivative(s, l, gamma).scale(-1.0));
    }
    e
}

fn coefficient_tail(g: &GridFunction) -> f64 {
    let grid = g.grid();
    match g.fit_tail() {
        Ok((_, q)) => q,
        Err(_) => envelope_exponent(grid.nodes(), g.values(), grid.y_max() / 10.0, grid.y_max()).unwrap_or(f64::NAN),
    }
}

/// Iterates F_k = E_{k−1} + (d−1)/(2y²) P_k, S_k = −𝓛⁻¹F_k for k = 2 … L+2.
pub fn build_sk(ctx: &OperatorContext, tks: &TkFamily, l: usize) -> Result<SkFamily> {
    if l == 0 || l > 4 {
        return Err(LabError::Parameter(format!("L = {l} outside 1 … 4")));
    }
    if tks.k_max() < l {
        return Err(LabError::Parameter(format!("T_k family has K = {} < L = {l}", tks.k_max())));
    }
    let p = ctx.pack();
    let gamma = p.gamma;
    let df = p.d as f64;
    let y = ctx.grid().nodes();
    let fj = sine_taylor_coefficients(p.q_deficit.values(), l + 2);
    let over_y2: Vec<f64> = y.iter().map(|y| 0.5 * (df - 1.0) / (y * y)).collect();
    // The second tail of π/2 − Q decays faster than y^{−γ} by y^{−g}, g = √(d² − 8d + 8); when
    // g < 2 (d = 7) ΛT_k − (2k−γ)T_k loses 2 − g powers of y and so does every S_k.
    let tail_loss = 2.0 - (df * df - 8.0 * df + 8.0).sqrt().min(2.0);

    let mut s: Vec<MonomialExpansion> = Vec::new();
    let mut a_s: Vec<MonomialExpansion> = Vec::new();
    let mut lam_s: Vec<MonomialExpansion> = Vec::new();
    let mut tails = Vec::new();
    for k in 2..=l + 2 {
        let prev = if k > 2 { Some((&s[k - 3], &lam_s[k - 3])) } else { None };
        let mut f = e_k(ctx, tks, k - 1, l, prev);
        // pow[j] holds the weighted-degree parts of Θ^j up to degree k.
        let theta: Vec<MonomialExpansion> = (0..k).map(|i| theta_part(tks, &s, l, i.max(1))).collect();
        let mut pow: Vec<Vec<Option<MonomialExpansion>>> = vec![vec![None; k + 1]; k + 1];
        for i in 1..k {
            pow[1][i] = Some(theta[i].clone());
        }
        for j in 2..=k {
            for deg in j..=k {
                let mut acc = MonomialExpansion::zero(ctx.grid(), l, (0, 0, deg));
                for i in 1..=(deg - j + 1).min(k - 1) {
                    if let Some(prev) = &pow[j - 1][deg - i] {
                        acc.add_assign(&theta[i].mul(prev));
                    }
                }
                pow[j][deg] = Some(acc);
            }
        }
        for j in 2..=k {
            if let Some(pk) = &pow[j][k] {
                f.add_assign(&pk.mul_fn(&fj[j]).mul_fn(&over_y2));
            }
        }
        let f = f.with_degree((k - 1, k as i32 - 2, k)).with_origin(Some(2 * k as i32 - 1));
        f.check_homogeneity()?;
        let mut sk = f.empty_like().with_degree((k, k as i32 - 1, k)).with_origin(Some(2 * k as i32 + 1));
        let mut ak = sk.clone().with_origin(Some(2 * k as i32));
        let mut tk_tails = Vec::new();
        for (m, c) in f.terms() {
            let inv = invert_l_full(ctx, &GridFunction::new(ctx.grid().clone(), c.clone(), Some(2 * k as i32 - 1)))?;
            let w = inv.w.scale(-1.0);
            let q = coefficient_tail(&w);
            let bound = 2.0 * (k as f64 - 1.0) - gamma + tail_loss + 0.1;
            if !(q <= bound) {
                return Err(LabError::Construction(format!(
                    "S_{k} coefficient {m:?} has tail exponent {q:.4} above {bound:.4}"
                )));
            }
            tk_tails.push((m.clone(), q));
            sk.add_term(m.clone(), w.values());
            ak.add_term(m.clone(), inv.a_w.scale(-1.0).values());
        }
        let v = p.v.values();
        let mut ls = sk.empty_like();
        for ((m, c), (_, ca)) in sk.terms().zip(ak.terms()) {
            let lc: Vec<f64> = (0..c.len()).map(|i| v[i] * c[i] - y[i] * ca[i]).collect();
            ls.add_term(m.clone(), &lc);
        }
        s.push(sk);
        a_s.push(ak);
        lam_s.push(ls);
        tails.push(tk_tails);
    }
    let top = l + 2;
    let e_top = e_k(ctx, tks, top, l, Some((&s[top - 2], &lam_s[top - 2])));
    Ok(SkFamily { l, gamma, s, a_s, e_top, tail_exponents: tails })
}
