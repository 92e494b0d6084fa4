//! Linearized operator 𝓛 = 𝓐*𝓐 around Q, its explicit inverse, the kernel
//! iterates T_k and the orthogonality direction Φ_M.

mod coercivity;
mod phim;
mod tk;

use std::sync::Arc;

pub use coercivity::{coercivity_probe, CoercivityReport};
pub use phim::{build_phi_m, cutoff_generators, PhiMDirection, PhiMReport};
pub use tk::{generate_tk, TkFamily, TkSummary};

use crate::error::{LabError, Result};
use crate::numerics::{GridFunction, RadialGrid};
use crate::profile::ProfilePack;

/// Shared background for operator applications.
#[derive(Debug, Clone)]
pub struct OperatorContext {
    pack: Arc<ProfilePack>,
    /// ΛZ = −2(d−1) sin(2Q) ΛQ.
    lam_z: GridFunction,
}

impl OperatorContext {
    pub fn new(pack: Arc<ProfilePack>) -> Self {
        let df = pack.d as f64;
        let lam_z = GridFunction::new(
            pack.grid().clone(),
            pack.q
                .values()
                .iter()
                .zip(pack.lam_q.values())
                .map(|(q, l)| -2.0 * (df - 1.0) * (2.0 * q).sin() * l)
                .collect(),
            Some(2),
        );
        Self { pack, lam_z }
    }

    pub fn pack(&self) -> &ProfilePack {
        &self.pack
    }
    pub fn pack_arc(&self) -> &Arc<ProfilePack> {
        &self.pack
    }
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.pack.grid()
    }
    pub fn d(&self) -> usize {
        self.pack.d
    }
    pub fn lam_z(&self) -> &GridFunction {
        &self.lam_z
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if f.same_grid(&self.pack.q) {
            Ok(())
        } else {
            Err(LabError::Usage("function is not on the operator grid".into()))
        }
    }
}

/// 𝓐f = −∂_y f + (V/y) f.
pub fn apply_a(ctx: &OperatorContext, f: &GridFunction) -> Result<GridFunction> {
    ctx.check(f)?;
    let df = f.lambda();
    let v = ctx.pack.v.values();
    let y = f.y();
    let values = (0..f.len()).map(|i| (-df.values()[i] + v[i] * f.values()[i]) / y[i]).collect();
    let p = f.origin_exponent().map(|p| if p == 1 { 2 } else { p - 1 });
    Ok(GridFunction::new(f.grid().clone(), values, p))
}

/// 𝓐*f = ∂_y f + ((d−1+V)/y) f.
pub fn apply_astar(ctx: &OperatorContext, f: &GridFunction) -> Result<GridFunction> {
    ctx.check(f)?;
    let df = f.lambda();
    let v = ctx.pack.v.values();
    let y = f.y();
    let dm1 = ctx.d() as f64 - 1.0;
    let values = (0..f.len()).map(|i| (df.values()[i] + (dm1 + v[i]) * f.values()[i]) / y[i]).collect();
    Ok(GridFunction::new(f.grid().clone(), values, f.origin_exponent().map(|p| p - 1)))
}

/// 𝓛f = −∂_yy f − ((d−1)/y) ∂_y f + (Z/y²) f.
pub fn apply_l(ctx: &OperatorContext, f: &GridFunction) -> Result<GridFunction> {
    ctx.check(f)?;
    let g = f.grid();
    let d1 = g.dx_k(f.values(), 1, f.origin_exponent());
    let d2 = g.dx_k(f.values(), 2, f.origin_exponent());
    let z = ctx.pack.z.values();
    let y = g.nodes();
    let dm2 = ctx.d() as f64 - 2.0;
    let values = (0..f.len()).map(|i| (-d2[i] - dm2 * d1[i] + z[i] * f.values()[i]) / (y[i] * y[i])).collect();
    let p = f.origin_exponent().map(|p| if p == 1 { 1 } else { p - 2 });
    Ok(GridFunction::new(g.clone(), values, p))
}

/// Solution w of 𝓛w = f together with 𝓐w, built from the explicit integral formulas.
#[derive(Debug, Clone)]
pub struct Inversion {
    pub w: GridFunction,
    pub a_w: GridFunction,
}

/// 𝓐w = (1/(y^{d−1}ΛQ)) ∫₀^y f ΛQ x^{d−1} dx and w = −ΛQ ∫₀^y 𝓐w/ΛQ dx.
pub fn invert_l_full(ctx: &OperatorContext, f: &GridFunction) -> Result<Inversion> {
    ctx.check(f)?;
    let g = f.grid();
    let y = g.nodes();
    let lq = ctx.pack.lam_q.values();
    let d = ctx.d() as i32;
    let n = g.len();
    let inner: Vec<f64> = (0..n).map(|i| f.values()[i] * lq[i] * y[i].powi(d - 1)).collect();
    let ci = g.cumulative_from_origin(&inner);
    let aw: Vec<f64> = (0..n).map(|i| ci[i] / (y[i].powi(d - 1) * lq[i])).collect();
    let ratio: Vec<f64> = (0..n).map(|i| aw[i] / lq[i]).collect();
    let cr = g.cumulative_from_origin(&ratio);
    let w: Vec<f64> = (0..n).map(|i| -lq[i] * cr[i]).collect();
    if w.iter().chain(&aw).any(|v| !v.is_finite()) {
        return Err(LabError::Inversion("non-finite values in the inversion; reduce y_max".into()));
    }
    let p = f.origin_exponent().map(|p| p + 2);
    let pa = f.origin_exponent().map(|p| p + 1);
    Ok(Inversion { w: GridFunction::new(g.clone(), w, p), a_w: GridFunction::new(g.clone(), aw, pa) })
}

/// w with 𝓛w = f, regular at the origin.
pub fn invert_l(ctx: &OperatorContext, f: &GridFunction) -> Result<GridFunction> {
    invert_l_full(ctx, f).map(|inv| inv.w)
}

/// max over interior nodes of y²/(1+y²)·|𝓛(Λf) − Λ(𝓛f) − 2𝓛f + (ΛZ/y²) f|.
pub fn lambda_commutator_check(ctx: &OperatorContext, f: &GridFunction) -> Result<f64> {
    let lf = apply_l(ctx, f)?;
    let l_lam = apply_l(ctx, &f.lambda())?;
    let lam_l = lf.lambda();
    let y = f.y();
    let n = f.len();
    let skip = 2 * ctx.grid().stencil_order();
    Ok((skip..n - skip)
        .map(|i| {
            let r = l_lam.values()[i] - lam_l.values()[i] - 2.0 * lf.values()[i]
                + ctx.lam_z.values()[i] / (y[i] * y[i]) * f.values()[i];
            r.abs() * y[i] * y[i] / (1.0 + y[i] * y[i])
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_grid;
    use crate::profile::solve_q;

    fn ctx(d: usize, n: usize) -> OperatorContext {
        let g = make_grid(d, 1e-3, 1e3, n).unwrap();
        OperatorContext::new(Arc::new(solve_q(&g).unwrap()))
    }

    #[test]
    fn a_annihilates_lam_q() {
        let c = ctx(7, 1024);
        let a = apply_a(&c, &c.pack().lam_q).unwrap();
        let scale = c.pack().lam_q.differentiate(1).max_abs();
        assert!(a.max_abs() < 1e-6 * scale);
    }

    #[test]
    fn zero_inverts_to_zero() {
        let c = ctx(8, 512);
        let z = GridFunction::zeros(c.grid(), Some(1));
        assert_eq!(invert_l(&c, &z).unwrap().max_abs(), 0.0);
        assert_eq!(lambda_commutator_check(&c, &z).unwrap(), 0.0);
    }
}
