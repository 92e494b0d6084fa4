//! Finite-dimensional b-system (b_k)_s + (2k−γ)b_1b_k − b_{k+1} = 0: explicit solutions,
//! linearization spectrum, rate extraction and the unstable-direction experiments.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::numerics::linalg::real_eigen;
use crate::numerics::{linear_fit, Dopri5};
use crate::profile::{gamma_exponent, spectral_params};
use crate::qb::DEFAULT_ETA;

/// λ below which integration stops.
pub const LAMBDA_MIN: f64 = 1e-12;
/// Output samples per decade of s.
const SAMPLES_PER_DECADE: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct ModeSystem {
    pub d: usize,
    pub gamma: f64,
    pub delta: f64,
    pub ell: usize,
    pub l: usize,
    /// c_1 … c_L.
    pub c: Vec<f64>,
}

impl ModeSystem {
    pub fn new(d: usize, ell: usize, l: usize) -> Result<Self> {
        let gamma = gamma_exponent(d)?;
        let (_, delta) = spectral_params(d)?;
        if ell == 0 || 2.0 * ell as f64 <= gamma {
            return Err(LabError::Parameter(format!("ℓ = {ell} violates 2ℓ > γ = {gamma}")));
        }
        if l < ell {
            return Err(LabError::Parameter(format!("L = {l} must be at least ℓ = {ell}")));
        }
        Ok(Self { d, gamma, delta, ell, l, c: explicit_coefficients(gamma, ell, l) })
    }

    /// s U_k' for U_k = s^k b_k − c_k, written without cancellation.
    fn u_rate(&self, u: &[f64], out: &mut [f64]) {
        let l = self.l;
        let b1 = self.c[0] + u[0];
        for k in 1..=l {
            let bk = self.c[k - 1] + u[k - 1];
            let next = if k < l { self.c[k] + u[k] } else { 0.0 };
            out[k - 1] = k as f64 * bk - (2.0 * k as f64 - self.gamma) * b1 * bk + next;
        }
    }

    /// Bound exponent η(1−δ)/2 of the shrinking set.
    pub fn shrink_exponent(&self) -> f64 {
        DEFAULT_ETA * (1.0 - self.delta) / 2.0
    }
}

/// c_1 = ℓ/(2ℓ−γ), c_{k+1} = −γ(ℓ−k)/(2ℓ−γ) c_k, zero beyond ℓ.
pub fn explicit_coefficients(gamma: f64, ell: usize, l: usize) -> Vec<f64> {
    let den = 2.0 * ell as f64 - gamma;
    let mut c = vec![0.0; l.max(1)];
    c[0] = ell as f64 / den;
    for k in 1..ell.min(l) {
        c[k] = -gamma * (ell - k) as f64 / den * c[k - 1];
    }
    c
}

/// b^e_k(s) = c_k / s^k.
pub fn explicit_solution(sys: &ModeSystem, s: f64) -> Result<Vec<f64>> {
    if !(s > 0.0) {
        return Err(LabError::Parameter(format!("s = {s} must be positive")));
    }
    Ok(sys.c.iter().enumerate().map(|(k, c)| c / s.powi(k as i32 + 1)).collect())
}

/// max_k |(b_k)_s + (2k−γ)b_1b_k − b_{k+1}| at b = b^e(s), with (b^e_k)_s = −k c_k / s^{k+1}.
pub fn explicit_residual(sys: &ModeSystem, s: f64) -> Result<f64> {
    let b = explicit_solution(sys, s)?;
    let l = sys.l;
    Ok((1..=l)
        .map(|k| {
            let bs = -(k as f64) * sys.c[k - 1] / s.powi(k as i32 + 1);
            let next = if k < l { b[k] } else { 0.0 };
            (bs + (2.0 * k as f64 - sys.gamma) * b[0] * b[k - 1] - next).abs()
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone)]
pub struct LinearizationMatrix {
    pub ell: usize,
    pub gamma: f64,
    pub a: DMatrix<f64>,
    /// Ascending, matching D_ℓ = diag{−1, 2γ/(2ℓ−γ), …, ℓγ/(2ℓ−γ)}.
    pub eigenvalues: Vec<f64>,
    /// P_ℓ with A_ℓ = P_ℓ⁻¹ D_ℓ P_ℓ, so 𝓥 = P_ℓ 𝓤.
    pub p: DMatrix<f64>,
    /// Columns are the eigenvectors of A_ℓ.
    pub p_inv: DMatrix<f64>,
}

impl LinearizationMatrix {
    pub fn unstable_count(&self) -> usize {
        self.eigenvalues.iter().filter(|e| **e > 0.0).count()
    }

    pub fn to_v(&self, u: &[f64]) -> Vec<f64> {
        let n = self.ell;
        (0..n).map(|i| (0..n).map(|j| self.p[(i, j)] * u[j]).sum()).collect()
    }

    pub fn to_u(&self, v: &[f64]) -> Vec<f64> {
        let n = self.ell;
        (0..n).map(|i| (0..n).map(|j| self.p_inv[(i, j)] * v[j]).sum()).collect()
    }
}

/// Closed-form spectrum {−1, kγ/(2ℓ−γ) : 2 ≤ k ≤ ℓ}.
pub fn expected_spectrum(gamma: f64, ell: usize) -> Vec<f64> {
    let den = 2.0 * ell as f64 - gamma;
    std::iter::once(-1.0).chain((2..=ell).map(|k| k as f64 * gamma / den)).collect()
}

/// Linearization of the b-system around b^e in the variables 𝓤_k = s^k b_k − c_k, 1 ≤ k ≤ ℓ:
/// s𝓤_s = A_ℓ𝓤 with a_{k,k} = γ(ℓ−k)/(2ℓ−γ), a_{k,k+1} = 1, a_{k,1} −= (2k−γ)c_k.
pub fn build_al(gamma: f64, ell: usize) -> Result<LinearizationMatrix> {
    if ell == 0 || 2.0 * ell as f64 <= gamma {
        return Err(LabError::Parameter(format!("ℓ = {ell} violates 2ℓ > γ = {gamma}")));
    }
    let c = explicit_coefficients(gamma, ell, ell);
    let den = 2.0 * ell as f64 - gamma;
    let mut a = DMatrix::zeros(ell, ell);
    for i in 1..=ell {
        a[(i - 1, i - 1)] = gamma * (ell - i) as f64 / den;
        if i < ell {
            a[(i - 1, i)] = 1.0;
        }
        a[(i - 1, 0)] -= (2.0 * i as f64 - gamma) * c[i - 1];
    }
    let (eigenvalues, p_inv) = real_eigen(&a)?;
    let p = p_inv.clone().try_inverse().ok_or_else(|| LabError::Domain("A_ℓ is not diagonalizable".into()))?;
    Ok(LinearizationMatrix { ell, gamma, a, eigenvalues, p, p_inv })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    LambdaMin,
    EndOfWindow,
    /// b_1 ≤ 0: the trajectory left the blowup regime.
    LeftRegime,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    /// Blowup time from Aitken extrapolation of t(s).
    pub t_blowup: f64,
    /// Exponent of λ against T − t.
    pub exponent_t: f64,
    /// Prefactor c in λ ≈ c (T − t)^{exponent_t}.
    pub prefactor: f64,
    pub fit_rms: f64,
    /// Exponent of λ against s.
    pub exponent_s: f64,
    pub window: (f64, f64),
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct ModeTrajectory {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    /// T − t from tail sums, free of cancellation against T.
    pub time_to_blowup: Vec<f64>,
    /// 𝓤_k(s) = s^k b_k − c_k.
    pub u: Vec<Vec<f64>>,
    pub stop: StopReason,
    pub fit: Option<RateFit>,
}

impl ModeTrajectory {
    pub fn b(&self, sys: &ModeSystem, i: usize) -> Vec<f64> {
        let s = self.s[i];
        (0..sys.l).map(|k| (sys.c[k] + self.u[i][k]) / s.powi(k as i32 + 1)).collect()
    }
}

fn log_outputs(s0: f64, s1: f64) -> Vec<f64> {
    let decades = (s1 / s0).log10();
    let n = ((decades * SAMPLES_PER_DECADE as f64).ceil() as usize).max(2);
    (0..=n).map(|i| s0.ln() + (s1 / s0).ln() * i as f64 / n as f64).collect()
}

/// Integrates the b-system together with (log λ)_s = −b_1 and t_s = λ² from λ(s0) = 1, t(s0) = 0.
pub fn integrate_system(sys: &ModeSystem, b0: &[f64], s0: f64, s1: f64) -> Result<ModeTrajectory> {
    if b0.len() != sys.l {
        return Err(LabError::Parameter(format!("expected {} initial values, got {}", sys.l, b0.len())));
    }
    if !(s0 > 0.0 && s1 > s0) {
        return Err(LabError::Parameter(format!("need 0 < s0 < s1, got {s0}, {s1}")));
    }
    let u0: Vec<f64> = (0..sys.l).map(|k| s0.powi(k as i32 + 1) * b0[k] - sys.c[k]).collect();
    integrate_u(sys, &u0, s0, s1, true)
}

/// Same flow in τ = ln s for 𝓤, log λ and the time increment over each output interval.
fn integrate_u(sys: &ModeSystem, u0: &[f64], s0: f64, s1: f64, stop_on_lambda: bool) -> Result<ModeTrajectory> {
    let l = sys.l;
    let taus = log_outputs(s0, s1);
    let solver = Dopri5::new(1e-12, 1e-14);
    let mut state: Vec<f64> = u0.iter().copied().chain([0.0, 0.0]).collect();
    let mut traj = ModeTrajectory {
        s: vec![s0],
        t: vec![0.0],
        lambda: vec![1.0],
        time_to_blowup: Vec::new(),
        u: vec![u0.to_vec()],
        stop: StopReason::EndOfWindow,
        fit: None,
    };
    let mut increments = Vec::new();
    let rhs = |tau: f64, y: &[f64], dy: &mut [f64]| {
        sys.u_rate(&y[..l], &mut dy[..l]);
        dy[l] = -(sys.c[0] + y[0]);
        dy[l + 1] = (tau + 2.0 * y[l]).exp();
    };
    for w in taus.windows(2) {
        state[l + 1] = 0.0;
        let sol = solver.solve(rhs, w[0], &state, &[w[1]])?;
        state.clone_from(&sol.y[0]);
        increments.push(state[l + 1]);
        let s = w[1].exp();
        traj.s.push(s);
        traj.t.push(traj.t.last().unwrap() + state[l + 1]);
        traj.lambda.push(state[l].exp());
        traj.u.push(state[..l].to_vec());
        if sys.c[0] + state[0] <= 0.0 {
            traj.stop = StopReason::LeftRegime;
            break;
        }
        if stop_on_lambda && traj.lambda.last().unwrap() < &LAMBDA_MIN {
            traj.stop = StopReason::LambdaMin;
            break;
        }
    }
    if traj.stop != StopReason::LeftRegime {
        let tail = aitken_tail(&increments);
        let n = traj.s.len();
        let mut ttb = vec![0.0; n];
        let mut acc = tail;
        ttb[n - 1] = acc;
        for i in (0..n - 1).rev() {
            acc += increments[i];
            ttb[i] = acc;
        }
        traj.fit = fit_rates(&traj.s, &traj.lambda, &ttb, traj.t[n - 1] + tail);
        traj.time_to_blowup = ttb;
    }
    Ok(traj)
}

/// Remaining time beyond the last sample from t at three log-equispaced s values.
fn aitken_tail(increments: &[f64]) -> f64 {
    let n = increments.len();
    let m = SAMPLES_PER_DECADE.min(n / 2).max(1);
    if n < 2 * m {
        return 0.0;
    }
    let d2: f64 = increments[n - m..].iter().sum();
    let d1: f64 = increments[n - 2 * m..n - m].iter().sum();
    let rho = d2 / d1;
    if !(rho > 0.0 && rho < 1.0) {
        return 0.0;
    }
    d2 * rho / (1.0 - rho)
}

/// Fits log λ against log(T − t) and log s after dropping the first 20% of samples
/// and the last decade of T − t.
fn fit_rates(s: &[f64], lambda: &[f64], ttb: &[f64], t_blowup: f64) -> Option<RateFit> {
    let n = s.len();
    let start = (0.2 * n as f64).ceil() as usize;
    let floor = 10.0 * ttb[n - 1];
    let idx: Vec<usize> = (start..n).filter(|&i| ttb[i] >= floor && ttb[i] > 0.0).collect();
    if idx.len() < 3 {
        return None;
    }
    let lx: Vec<f64> = idx.iter().map(|&i| ttb[i].ln()).collect();
    let ly: Vec<f64> = idx.iter().map(|&i| lambda[i].ln()).collect();
    let ls: Vec<f64> = idx.iter().map(|&i| s[i].ln()).collect();
    let ft = linear_fit(&lx, &ly).ok()?;
    let fs = linear_fit(&ls, &ly).ok()?;
    Some(RateFit {
        t_blowup,
        exponent_t: ft.slope,
        prefactor: ft.intercept.exp(),
        fit_rms: ft.rms,
        exponent_s: fs.slope,
        window: (s[idx[0]], s[*idx.last().unwrap()]),
        points: idx.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeGrowth {
    pub mode: usize,
    pub eigenvalue: f64,
    pub amplitude: f64,
    pub fitted_exponent: f64,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct InstabilityReport {
    pub d: usize,
    pub ell: usize,
    pub s0: f64,
    pub modes: Vec<ModeGrowth>,
    /// max |𝓤(s)| along the unperturbed trajectory over the same window.
    pub baseline_deviation: f64,
}

/// Starting s for the instability experiment.
pub const INSTABILITY_S0: f64 = 10.0;

/// Perturbs b^e(s0) along each eigenvector of A_ℓ with amplitude in [eps/2, eps] and a random
/// sign, then fits the power-law exponent of |𝓥_m(s)| over the linear window.
pub fn instability_experiment(sys: &ModeSystem, eps: f64, seed: u64) -> Result<InstabilityReport> {
    if sys.ell < 2 {
        return Err(LabError::Parameter("the instability experiment needs ℓ ≥ 2".into()));
    }
    if !(0.0..=1e-3).contains(&eps) {
        return Err(LabError::Parameter(format!("eps = {eps} outside [0, 1e-3]")));
    }
    let al = build_al(sys.gamma, sys.ell)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s0 = INSTABILITY_S0;
    let top = al.eigenvalues.iter().fold(1.0f64, |m, e| m.max(*e));
    let s1 = if eps > 0.0 { s0 * (1e-2 / eps).powf(1.0 / top).min(100.0) } else { 100.0 * s0 };
    let base = integrate_u(sys, &vec![0.0; sys.l], s0, s1, false)?;
    let baseline_deviation = base.u.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut modes = Vec::with_capacity(sys.ell);
    for (m, &eig) in al.eigenvalues.iter().enumerate() {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let amplitude = sign * eps * rng.random_range(0.5..=1.0);
        let mut v = vec![0.0; sys.ell];
        v[m] = amplitude;
        let mut u0 = al.to_u(&v);
        u0.resize(sys.l, 0.0);
        let traj = integrate_u(sys, &u0, s0, s1, false)?;
        let (lx, ly): (Vec<f64>, Vec<f64>) = traj
            .s
            .iter()
            .zip(&traj.u)
            .filter_map(|(s, u)| {
                let vm = al.to_v(&u[..sys.ell])[m].abs();
                (vm > 0.0).then(|| (s.ln(), vm.ln()))
            })
            .unzip();
        let fitted_exponent = linear_fit(&lx, &ly).map(|f| f.slope).unwrap_or(f64::NAN);
        modes.push(ModeGrowth { mode: m + 1, eigenvalue: eig, amplitude, fitted_exponent, window: (s0, s1) });
    }
    Ok(InstabilityReport { d: sys.d, ell: sys.ell, s0, modes, baseline_deviation })
}

#[derive(Debug, Clone, Serialize)]
pub struct ShootingResult {
    pub s0: f64,
    pub target_s: f64,
    /// Stable-mode datum 𝓥_1(s0) = ½ s0^{−η(1−δ)/2}.
    pub v1: f64,
    /// Shooting parameter 𝓥_2(s0).
    pub v2: f64,
    pub bracket: (f64, f64),
    /// max over the trajectory of |𝓥_k(s)| s^{η(1−δ)/2} / 10; at most 1 inside the shrinking set.
    pub max_bound_ratio: f64,
    pub exit_s: Option<f64>,
    pub iterations: usize,
}

struct Exit {
    /// Sign of 𝓥_2 at exit, or at target_s when the trajectory stays.
    side: f64,
    s: Option<f64>,
    worst: f64,
}

/// Follows the trajectory from (𝓥_1, 𝓥_2)(s0) against |𝓥_k| ≤ 10 s^{−κ}.
fn exit_side(sys: &ModeSystem, al: &LinearizationMatrix, v1: f64, v2: f64, s0: f64, target: f64) -> Result<Exit> {
    let kappa = sys.shrink_exponent();
    let mut u0 = al.to_u(&[v1, v2]);
    u0.resize(sys.l, 0.0);
    let traj = integrate_u(sys, &u0, s0, target, false)?;
    let mut worst: f64 = 0.0;
    let mut last = 0.0;
    for (s, u) in traj.s.iter().zip(&traj.u) {
        let v = al.to_v(&u[..2]);
        let bound = 10.0 * s.powf(-kappa);
        worst = worst.max(v[0].abs() / bound).max(v[1].abs() / bound);
        last = v[1];
        if v[1].abs() > bound {
            return Ok(Exit { side: v[1].signum(), s: Some(*s), worst });
        }
    }
    if traj.stop == StopReason::LeftRegime {
        return Ok(Exit { side: -1.0, s: traj.s.last().copied(), worst });
    }
    Ok(Exit { side: if last >= 0.0 { 1.0 } else { -1.0 }, s: None, worst })
}

/// Bisection on 𝓥_2(s0) ∈ [−s0^{−κ}, s0^{−κ}] for ℓ = 2 so that the trajectory stays in the
/// shrinking set up to target_s.
pub fn shoot_unstable(sys: &ModeSystem, s0: f64, target_s: f64, tol: f64) -> Result<ShootingResult> {
    if sys.ell != 2 {
        return Err(LabError::Parameter("shooting is implemented for ℓ = 2".into()));
    }
    if !(tol > 0.0 && target_s > s0 && s0 > 0.0) {
        return Err(LabError::Parameter("need tol > 0 and 0 < s0 < target_s".into()));
    }
    let al = build_al(sys.gamma, 2)?;
    let r = s0.powf(-sys.shrink_exponent());
    let v1 = 0.5 * r;
    let (mut lo, mut hi) = (-r, r);
    let side = |v2: f64| exit_side(sys, &al, v1, v2, s0, target_s);
    let e_lo = side(lo)?;
    let e_hi = side(hi)?;
    if e_lo.s.is_none() || e_hi.s.is_none() || e_lo.side == e_hi.side {
        return Err(LabError::Shooting(format!(
            "no transverse exits at the bracket ends [{lo}, {hi}]: sides {} and {}",
            e_lo.side, e_hi.side
        )));
    }
    let mut iterations = 0;
    while hi - lo > tol {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if side(mid)?.side == e_lo.side {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v2 = 0.5 * (lo + hi);
    let e = side(v2)?;
    Ok(ShootingResult { s0, target_s, v1, v2, bracket: (lo, hi), max_bound_ratio: e.worst, exit_s: e.s, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_vanish_beyond_ell() {
        let c = explicit_coefficients(1.5, 2, 4);
        assert_eq!(c[2], 0.0);
        assert_eq!(c[3], 0.0);
    }

    #[test]
    fn excluded_regime_is_rejected() {
        assert!(ModeSystem::new(7, 1, 1).is_err());
        assert!(build_al(2.0, 1).is_err());
        assert!(ModeSystem::new(8, 2, 1).is_err());
    }
}
