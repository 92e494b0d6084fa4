use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{apply_a, apply_l, OperatorContext, PhiMDirection};
use crate::error::{LabError, Result};
use crate::numerics::{inner_product, GridFunction};

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    pub k: usize,
    pub samples: usize,
    pub seed: u64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub median_ratio: f64,
}

fn weighted(f: &GridFunction, w: impl Fn(f64) -> f64) -> f64 {
    let v: Vec<f64> = f.y().iter().zip(f.values()).map(|(y, h)| h * h * w(*y)).collect();
    f.grid().integrate(&v, None)
}

/// Ratio 𝓔_{2k+2}(f) / (weighted lower-order norms) for one sample.
fn ratio(ctx: &OperatorContext, f: &GridFunction, k: usize) -> Result<f64> {
    let mut lf = vec![f.clone()];
    for _ in 0..=k {
        let next = apply_l(ctx, lf.last().unwrap())?;
        lf.push(next);
    }
    let e = weighted(&lf[k + 1], |_| 1.0);
    let ki = k as i32;
    let mut rhs = weighted(&apply_a(ctx, &lf[k])?, |y| y.powi(-2));
    for (m, g) in lf.iter().enumerate().take(k + 1) {
        let mi = m as i32;
        rhs += weighted(g, |y| 1.0 / (y.powi(4) * (1.0 + y.powi(4 * (ki - mi)))));
    }
    for (m, g) in lf.iter().enumerate().take(k) {
        let mi = m as i32;
        let a = apply_a(ctx, g)?;
        rhs += weighted(&a, |y| 1.0 / (y.powi(6) * (1.0 + y.powi(4 * (ki - mi - 1)))));
    }
    Ok(e / rhs)
}

/// Minimum sampled coercivity ratio for 𝓛^{k+1} over random smooth bumps projected to
/// ⟨f, 𝓛^m Φ_M⟩ = 0, 0 ≤ m ≤ k − ħ.
pub fn coercivity_probe(
    ctx: &OperatorContext,
    phi: &PhiMDirection,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<CoercivityReport> {
    let hbar = ctx.pack().hbar as i64;
    let m_max = k as i64 - hbar;
    if m_max >= phi.l_phi.len() as i64 {
        return Err(LabError::Parameter(format!("need 𝓛^m Φ_M up to m = {m_max}; build Φ_M with L >= {m_max}")));
    }
    let basis: Vec<&GridFunction> =
        if m_max >= 0 { phi.l_phi.iter().take(m_max as usize + 1).collect() } else { Vec::new() };
    let nb = basis.len();
    let mut gram = DMatrix::zeros(nb, nb);
    for a in 0..nb {
        for b in 0..nb {
            gram[(a, b)] = inner_product(basis[a], basis[b])?;
        }
    }
    let gram_lu = gram.lu();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(samples);
    let grid = ctx.grid();
    while ratios.len() < samples {
        let bumps: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                let amp: f64 = rng.random_range(-1.0..1.0);
                let mu: f64 = rng.random_range(0.2f64.ln()..20f64.ln());
                let sigma: f64 = rng.random_range(0.3..1.0);
                (amp, mu, sigma)
            })
            .collect();
        let mut f = GridFunction::from_fn(grid, Some(1), |y| {
            let x = y.ln();
            y * bumps.iter().map(|(a, mu, s)| a * (-((x - mu) / s).powi(2)).exp()).sum::<f64>()
        });
        if nb > 0 {
            let rhs = DVector::from_iterator(nb, basis.iter().map(|u| inner_product(&f, u).unwrap_or(0.0)));
            let alpha =
                gram_lu.solve(&rhs).ok_or_else(|| LabError::Construction("singular projection basis".into()))?;
            for (a, u) in alpha.iter().zip(&basis) {
                f.axpy(-a, u);
            }
        }
        let nrm = inner_product(&f, &f)?.sqrt();
        if nrm < 1e-12 {
            continue;
        }
        let f = f.scale(1.0 / nrm);
        ratios.push(ratio(ctx, &f, k)?);
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(CoercivityReport {
        k,
        samples,
        seed,
        min_ratio: sorted[0],
        max_ratio: sorted[sorted.len() - 1],
        median_ratio: sorted[sorted.len() / 2],
    })
}
