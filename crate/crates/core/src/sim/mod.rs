//! Dynamically rescaled solver for u_t = u_rr + (d−1)/r u_r − (d−1)/(2r²) sin 2u with the
//! modulated decomposition u = (Q̃_b + q)(r/λ).

mod config;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use config::{Gauge, SimConfig};

use crate::error::{LabError, Result};
use crate::linop::{apply_l, build_phi_m, generate_tk, OperatorContext, PhiMDirection, TkFamily};
use crate::modes::{build_al, explicit_solution, ModeSystem};
use crate::numerics::linalg::BandMatrix;
use crate::numerics::{linear_fit, make_grid, GridFunction, RadialGrid};
use crate::profile::solve_q;
use crate::qb::{assemble_qb, assemble_qb_relaxed, build_sk, parameter_derivatives, SkFamily};

/// Stage coefficient of the L-stable two-stage Rosenbrock scheme.
const ROS2_GAMMA: f64 = 1.0 + std::f64::consts::FRAC_1_SQRT_2;
const MAX_REJECTIONS: usize = 60;
const MAX_NEWTON: usize = 40;

/// Sparse rows of y⁻²(D² + (d−2)D) and of Λ = D in x = ln y, with origin ghosts folded in.
#[derive(Debug, Clone)]
struct RadialOperator {
    diff: Vec<Vec<(usize, f64)>>,
    lam: Vec<Vec<(usize, f64)>>,
    /// (d−1)/(2y²).
    sin_coef: Vec<f64>,
    kl: usize,
    ku: usize,
}

impl RadialOperator {
    fn new(ctx: &OperatorContext) -> Self {
        let g = ctx.grid();
        let n = g.len();
        let y = g.nodes();
        let dm2 = ctx.d() as f64 - 2.0;
        let ghosts = g.origin_ghost_coefficients(1);
        let fold = |i: usize, k: usize| -> BTreeMap<usize, f64> {
            let mut m = BTreeMap::new();
            for (j, w) in g.stencil_row(i, k, true) {
                if j >= 0 {
                    *m.entry(j as usize).or_insert(0.0) += w;
                } else {
                    let c = ghosts[(-j - 1) as usize];
                    *m.entry(0).or_insert(0.0) += w * c[0];
                    *m.entry(1).or_insert(0.0) += w * c[1];
                }
            }
            m
        };
        let (mut diff, mut lam) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let (mut kl, mut ku) = (0usize, 0usize);
        for i in 0..n {
            let d1 = fold(i, 1);
            if i == n - 1 {
                for &j in d1.keys() {
                    kl = kl.max(i - j);
                }
                diff.push(Vec::new());
                lam.push(d1.into_iter().collect());
                continue;
            }
            let d2 = fold(i, 2);
            let mut row: BTreeMap<usize, f64> = BTreeMap::new();
            for (j, w) in &d2 {
                *row.entry(*j).or_insert(0.0) += w / (y[i] * y[i]);
            }
            for (j, w) in &d1 {
                *row.entry(*j).or_insert(0.0) += dm2 * w / (y[i] * y[i]);
            }
            for &j in row.keys().chain(d1.keys()) {
                kl = kl.max(i.saturating_sub(j));
                ku = ku.max(j.saturating_sub(i));
            }
            diff.push(row.into_iter().collect());
            lam.push(d1.into_iter().collect());
        }
        let df = ctx.d() as f64;
        let sin_coef = y.iter().map(|y| 0.5 * (df - 1.0) / (y * y)).collect();
        Self { diff, lam, sin_coef, kl, ku }
    }

    fn apply(rows: &[(usize, f64)], w: &[f64]) -> f64 {
        rows.iter().map(|(j, c)| c * w[*j]).sum()
    }

    /// F(w) = Δw − βΛw − (d−1)/(2y²) sin 2w; the outer node only carries the outflow −βΛw.
    fn rhs(&self, w: &[f64], beta: f64, out: &mut [f64]) {
        let n = w.len();
        for i in 0..n - 1 {
            out[i] = Self::apply(&self.diff[i], w)
                - beta * Self::apply(&self.lam[i], w)
                - self.sin_coef[i] * (2.0 * w[i]).sin();
        }
        out[n - 1] = -beta * Self::apply(&self.lam[n - 1], w);
    }

    /// I − c·J(w) with J the Jacobian of `rhs`.
    fn shifted_jacobian(&self, w: &[f64], beta: f64, c: f64) -> BandMatrix {
        let n = w.len();
        let mut m = BandMatrix::zeros(n, self.kl, self.ku);
        for i in 0..n - 1 {
            m.add(i, i, 1.0 + c * 2.0 * self.sin_coef[i] * (2.0 * w[i]).cos());
            for (j, v) in &self.diff[i] {
                m.add(i, *j, -c * v);
            }
            for (j, v) in &self.lam[i] {
                m.add(i, *j, c * beta * v);
            }
        }
        m.add(n - 1, n - 1, 1.0);
        for (j, v) in &self.lam[n - 1] {
            m.add(n - 1, *j, c * beta * v);
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    /// Solution in the stepping frame y = r/λ_g.
    pub w: GridFunction,
    /// q = w(μ·) − Q̃_b.
    pub q: GridFunction,
    /// λ = λ_g μ.
    pub lambda: f64,
    pub lambda_gauge: f64,
    pub mu: f64,
    pub b: Vec<f64>,
    pub s: f64,
    pub t: f64,
    /// Next proposed Δs.
    pub ds: f64,
    /// t-increment of the last accepted step.
    pub dt: f64,
    pub steps: usize,
    pub rejected: usize,
    pub energy: f64,
    /// Relative change of the computational-ball energy over the last step.
    pub energy_change: f64,
    /// max_i |⟨q, 𝓛^iΦ_M⟩| / ⟨|Q|, |𝓛^iΦ_M|⟩.
    pub orth_residual: f64,
    pub newton_iterations: usize,
}

/// Nodes per decade of the grid carrying Φ_M; coarser grids under-resolve 𝓛^j(χ_M ΛQ) for j > 2.
const PROJECTION_NODES_PER_DECADE: f64 = 2730.0;

/// Φ_M and its 𝓛-powers on a fine grid over [y_min, max(10³, 4M)].
fn projection_direction(cfg: &SimConfig) -> Result<PhiMDirection> {
    let y_max = (4.0 * cfg.m).max(1e3);
    let n = (PROJECTION_NODES_PER_DECADE * (y_max / cfg.y_min).log10()).ceil() as usize;
    let grid = make_grid(cfg.d, cfg.y_min, y_max, n)?;
    let ctx = OperatorContext::new(Arc::new(solve_q(&grid)?));
    let tks = generate_tk(&ctx, cfg.l)?;
    build_phi_m(&ctx, &tks, cfg.m, cfg.l)
}

/// Integrates the six-point interpolant of a coarse function against 𝓛^iΦ_M on the fine grid,
/// returning the equivalent coarse weights and the number of coarse nodes they touch.
fn projection_functionals(grid: &RadialGrid, phi: &PhiMDirection) -> (Vec<Vec<f64>>, usize) {
    let fine = phi.phi.grid();
    let mut g = vec![vec![0.0; grid.len()]; phi.l_phi.len()];
    let mut top = 0;
    for (j, (&y, &w)) in fine.nodes().iter().zip(fine.weights()).enumerate() {
        if phi.l_phi.iter().all(|lp| lp.values()[j] == 0.0) {
            continue;
        }
        let (base, l) = grid.interpolation_stencil(y);
        for (gi, lp) in g.iter_mut().zip(&phi.l_phi) {
            let c = w * lp.values()[j];
            for m in 0..6 {
                gi[base + m] += c * l[m];
            }
        }
        top = top.max(base + 6);
    }
    for gi in &mut g {
        gi.truncate(top);
    }
    (g, top)
}

/// Precomputed operators and profile data for one configuration.
pub struct Simulator {
    pub cfg: SimConfig,
    pub ctx: OperatorContext,
    pub tks: Arc<TkFamily>,
    pub sks: Arc<SkFamily>,
    /// Φ_M on its own fine grid.
    pub phi: PhiMDirection,
    pub modes: ModeSystem,
    op: RadialOperator,
    /// Coarse-grid functionals with Σ_k g_i[k] f_k ≈ ⟨f, 𝓛^iΦ_M⟩.
    functionals: Vec<Vec<f64>>,
    /// Coarse nodes the functionals touch.
    support: usize,
    /// Σ_k |g_i[k] Q_k|, the rounding scale of the i-th orthogonality condition.
    row_scale: Vec<f64>,
    norm_node: usize,
}

struct Decomposition {
    mu: f64,
    b: Vec<f64>,
    q: GridFunction,
    residual: f64,
    iterations: usize,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let modes = ModeSystem::new(cfg.d, cfg.ell, cfg.l)?;
        let grid = make_grid(cfg.d, cfg.y_min, cfg.y_max, cfg.n)?;
        let ctx = OperatorContext::new(Arc::new(solve_q(&grid)?));
        let tks = generate_tk(&ctx, cfg.l)?;
        let sks = build_sk(&ctx, &tks, cfg.l)?;
        let phi = projection_direction(&cfg)?;
        let (functionals, support) = projection_functionals(&grid, &phi);
        let op = RadialOperator::new(&ctx);
        let norm_node = grid.index_at_or_above(1.0);
        let q = ctx.pack().q.values();
        let row_scale = functionals.iter().map(|g| g.iter().zip(q).map(|(a, b)| (a * b).abs()).sum()).collect();
        Ok(Self {
            cfg,
            ctx,
            tks: Arc::new(tks),
            sks: Arc::new(sks),
            phi,
            modes,
            op,
            functionals,
            support,
            row_scale,
            norm_node,
        })
    }

    /// Q̃_b on the grid.
    pub fn profile(&self, b: &[f64]) -> Result<GridFunction> {
        Ok(assemble_qb_relaxed(&self.ctx, self.tks.clone(), self.sks.clone(), b, self.cfg.eta)?.qb_localized)
    }

    /// Dirichlet energy of u inside the computational ball r ≤ λ_g y_max:
    /// λ_g^{d−2} ∫ (w_y² + (d−1) sin²w / y²) y^{d−1} dy.
    pub fn energy(&self, w: &GridFunction, lambda_gauge: f64) -> f64 {
        self.energy_within(w, lambda_gauge, f64::INFINITY)
    }

    /// Energy of u inside r ≤ radius, for a state in the frame y = r/λ_g.
    pub fn energy_within(&self, w: &GridFunction, lambda_gauge: f64, radius: f64) -> f64 {
        let g = self.ctx.grid();
        let d = self.cfg.d as f64;
        let wy = w.differentiate(1);
        let dens: Vec<f64> = (0..g.len())
            .map(|i| {
                let (y, v) = (g.nodes()[i], w.values()[i]);
                (wy.values()[i].powi(2) + (d - 1.0) * v.sin().powi(2) / (y * y)) * y.powf(d - 1.0)
            })
            .collect();
        let cum = g.cumulative_from_origin(&dens);
        let y_cut = radius / lambda_gauge;
        let inside = if y_cut >= g.y_max() { cum[g.len() - 1] } else { g.interpolate(&cum, y_cut, None) };
        lambda_gauge.powi(self.cfg.d as i32 - 2) * inside
    }

    /// Checks b0 against the initial-data bounds at s0 = c_1/b_1.
    fn check_initial_parameters(&self, b0: &[f64]) -> Result<f64> {
        let sys = &self.modes;
        if b0.len() != sys.l {
            return Err(LabError::Parameter(format!("expected {} parameters, got {}", sys.l, b0.len())));
        }
        if b0.iter().all(|b| *b == 0.0) {
            return Ok(0.0);
        }
        if b0[0] <= 0.0 {
            return Err(LabError::Parameter("b_1(s0) must be positive".into()));
        }
        let s0 = sys.c[0] / b0[0];
        let al = build_al(sys.gamma, sys.ell)?;
        let u: Vec<f64> = (0..sys.ell).map(|k| s0.powi(k as i32 + 1) * b0[k] - sys.c[k]).collect();
        let v = al.to_v(&u);
        let bound = 10.0 * s0.powf(-sys.shrink_exponent());
        if v.iter().any(|x| x.abs() > bound) {
            return Err(LabError::Parameter(format!("b0 outside the shrinking set at s0 = {s0}: 𝓥 = {v:?}")));
        }
        for (k, bk) in b0.iter().enumerate().skip(sys.ell) {
            if bk.abs() > s0.powi(-(k as i32 + 1)) {
                return Err(LabError::Parameter(format!("|b_{}(s0)| exceeds s0^-{}", k + 1, k + 1)));
            }
        }
        Ok(s0)
    }

    /// w = Q̃_{b0} + q0 with λ = 1 at s0 = c_1/b_1 (s0 = 0 for b0 = 0).
    pub fn init_data(&self, b0: &[f64], q0: Option<&GridFunction>) -> Result<SimState> {
        let s0 = self.check_initial_parameters(b0)?;
        let base = if b0.iter().all(|b| *b == 0.0) {
            self.ctx.pack().q.clone()
        } else {
            assemble_qb(&self.ctx, self.tks.clone(), self.sks.clone(), b0, self.cfg.eta)?.qb_localized
        };
        let w = match q0 {
            Some(q) => base.add(q),
            None => base,
        }
        .with_origin(Some(1));
        self.start(w, b0, s0)
    }

    /// Data w0(y) = Q̃_{b0}(y/μ) on the same grid with λ_g = 1; the decomposition recovers λ = μ.
    pub fn init_scaled(&self, b0: &[f64], mu: f64) -> Result<SimState> {
        let s0 = self.check_initial_parameters(b0)?;
        let base = self.profile(b0)?;
        let g = self.ctx.grid();
        let w = GridFunction::new(
            g.clone(),
            g.nodes().iter().map(|&y| g.interpolate(base.values(), y / mu, Some(1))).collect(),
            Some(1),
        );
        let mut st = self.start_with_guess(w, b0, s0, mu)?;
        st.energy = self.energy(&st.w, st.lambda_gauge);
        Ok(st)
    }

    fn start(&self, w: GridFunction, b0: &[f64], s0: f64) -> Result<SimState> {
        let mut st = self.start_with_guess(w, b0, s0, 1.0)?;
        st.energy = self.energy(&st.w, 1.0);
        Ok(st)
    }

    fn start_with_guess(&self, w: GridFunction, b0: &[f64], s0: f64, mu: f64) -> Result<SimState> {
        let dec = self.decomposition(&w, mu, b0)?;
        Ok(SimState {
            q: dec.q,
            lambda: dec.mu,
            lambda_gauge: 1.0,
            mu: dec.mu,
            b: dec.b,
            s: s0,
            t: 0.0,
            ds: self.cfg.ds_init,
            dt: 0.0,
            steps: 0,
            rejected: 0,
            energy: 0.0,
            energy_change: 0.0,
            orth_residual: dec.residual,
            newton_iterations: dec.iterations,
            w,
        })
    }

    fn orth(&self, f: &[f64], i: usize) -> f64 {
        self.functionals[i].iter().zip(f).map(|(g, v)| g * v).sum()
    }

    /// Newton iteration on (ln μ, b) for ⟨w(μ·) − Q̃_b, 𝓛^iΦ_M⟩ = 0, i = 0 … L.
    fn decomposition(&self, w: &GridFunction, mu0: f64, b0: &[f64]) -> Result<Decomposition> {
        let g = self.ctx.grid();
        let y = g.nodes();
        let l = self.cfg.l;
        let lw = w.lambda();
        let mut ln_mu = mu0.ln();
        let mut b = b0.to_vec();
        let pull = |f: &[f64], mu: f64, upto: usize| -> Vec<f64> {
            (0..upto).map(|i| g.interpolate(f, mu * y[i], Some(1))).collect()
        };
        for it in 0..=MAX_NEWTON {
            let mu = ln_mu.exp();
            let prof = assemble_qb_relaxed(&self.ctx, self.tks.clone(), self.sks.clone(), &b, self.cfg.eta)?;
            let wm = pull(w.values(), mu, self.support);
            let diff: Vec<f64> = (0..self.support).map(|i| wm[i] - prof.qb_localized.values()[i]).collect();
            let res: Vec<f64> = (0..=l).map(|i| self.orth(&diff, i)).collect();
            let scaled = res.iter().zip(&self.row_scale).fold(0.0f64, |m, (r, w)| m.max(r.abs() / w));
            if scaled <= self.cfg.newton_tol || it == MAX_NEWTON {
                if scaled > self.cfg.newton_tol.max(1e-6) {
                    return Err(LabError::Decomposition(format!(
                        "Newton stalled at residual {scaled:e} after {it} iterations"
                    )));
                }
                let full = pull(w.values(), mu, g.len());
                let q = GridFunction::new(
                    g.clone(),
                    full.iter().zip(prof.qb_localized.values()).map(|(a, b)| a - b).collect(),
                    Some(1),
                );
                return Ok(Decomposition { mu, b, q, residual: scaled, iterations: it });
            }
            let lwm = pull(lw.values(), mu, self.support);
            let dirs = parameter_derivatives(&prof)?;
            let mut jac = DMatrix::zeros(l + 1, l + 1);
            for i in 0..=l {
                jac[(i, 0)] = self.orth(&lwm, i);
                for (j, d) in dirs.iter().enumerate() {
                    jac[(i, j + 1)] = -self.orth(&d.values()[..self.support], i);
                }
            }
            let rhs = DVector::from_iterator(l + 1, res.iter().map(|r| -r));
            let delta = jac
                .lu()
                .solve(&rhs)
                .ok_or_else(|| LabError::Decomposition("singular decomposition Jacobian".into()))?;
            let damp = (0.5 / delta[0].abs().max(1e-300)).min(1.0);
            ln_mu += damp * delta[0];
            for j in 0..l {
                b[j] += damp * delta[j + 1];
            }
            if !ln_mu.is_finite() || b.iter().any(|v| !v.is_finite()) {
                return Err(LabError::Decomposition("Newton iterate is not finite".into()));
            }
        }
        unreachable!()
    }

    /// Jacobian of the orthogonality conditions in (λ, b_1 … b_L) at λ = 1 and the given b.
    pub fn decomposition_jacobian(&self, b: &[f64]) -> Result<DMatrix<f64>> {
        let l = self.cfg.l;
        let prof = assemble_qb_relaxed(&self.ctx, self.tks.clone(), self.sks.clone(), b, self.cfg.eta)?;
        let lq = prof.qb_localized.lambda();
        let dirs = parameter_derivatives(&prof)?;
        let mut jac = DMatrix::zeros(l + 1, l + 1);
        for i in 0..=l {
            jac[(i, 0)] = self.orth(lq.values(), i);
            for (j, d) in dirs.iter().enumerate() {
                jac[(i, j + 1)] = self.orth(d.values(), i);
            }
        }
        Ok(jac)
    }

    /// Re-runs the decomposition of state.w, warm-started from the state's (μ, b).
    pub fn decompose(&self, state: &SimState) -> Result<SimState> {
        let dec = self.decomposition(&state.w, state.mu, &state.b)?;
        let mut st = state.clone();
        st.mu = dec.mu;
        st.lambda = st.lambda_gauge * dec.mu;
        st.b = dec.b;
        st.q = dec.q;
        st.orth_residual = dec.residual;
        st.newton_iterations = dec.iterations;
        Ok(st)
    }

    /// −λ_s/λ used for the next step.
    fn gauge_speed(&self, state: &SimState) -> f64 {
        match self.cfg.gauge {
            // b lives on the core scale λ = λ_g μ, whose rescaled time runs at 1/μ²; the ln μ
            // term relaxes μ back to 1 at rate b_1.
            Gauge::FullModulation => state.b[0] * (1.0 / (state.mu * state.mu) - state.mu.ln()),
            Gauge::PosthocFit => {
                let w = state.w.values();
                let i = self.norm_node;
                let f0 = RadialOperator::apply(&self.op.diff[i], w) - self.op.sin_coef[i] * (2.0 * w[i]).sin();
                f0 / RadialOperator::apply(&self.op.lam[i], w)
            }
        }
    }

    /// One ROS2 step of size h; returns the new values and the scaled error estimate.
    fn ros2(&self, w: &[f64], beta: f64, h: f64) -> Result<(Vec<f64>, f64)> {
        let n = w.len();
        let mut m = self.op.shifted_jacobian(w, beta, ROS2_GAMMA * h);
        m.factor()?;
        let mut k1 = vec![0.0; n];
        self.op.rhs(w, beta, &mut k1);
        m.solve(&mut k1);
        let w1: Vec<f64> = (0..n).map(|i| w[i] + h * k1[i]).collect();
        let mut k2 = vec![0.0; n];
        self.op.rhs(&w1, beta, &mut k2);
        for i in 0..n {
            k2[i] -= 2.0 * k1[i];
        }
        m.solve(&mut k2);
        let mut out = vec![0.0; n];
        let mut err: f64 = 0.0;
        for i in 0..n {
            out[i] = w[i] + 1.5 * h * k1[i] + 0.5 * h * k2[i];
            let e = 0.5 * h * (k1[i] + k2[i]);
            err = err.max(e.abs() / (self.cfg.atol + self.cfg.rtol * out[i].abs().max(w[i].abs())));
        }
        if out.iter().any(|v| !v.is_finite()) {
            err = f64::INFINITY;
        }
        Ok((out, err))
    }

    /// Advances by one accepted step, then re-decomposes.
    pub fn step(&self, state: &SimState) -> Result<SimState> {
        let beta = self.gauge_speed(state);
        let mut h = state.ds;
        let mut rejected = 0;
        let (w_new, err) = loop {
            let (w_new, err) = self.ros2(state.w.values(), beta, h)?;
            if err <= 1.0 {
                break (w_new, err);
            }
            rejected += 1;
            h *= if err.is_finite() { (0.9 / err.sqrt()).clamp(0.2, 0.9) } else { 0.2 };
            if rejected > MAX_REJECTIONS || h < 1e-14 * state.s.abs().max(1.0) {
                return Err(LabError::Stiffness(format!("step rejected {rejected} times at s = {}", state.s)));
            }
        };
        let w = GridFunction::new(self.ctx.grid().clone(), w_new, Some(1));
        let lg = state.lambda_gauge;
        let dt =
            if beta.abs() * h > 1e-12 { lg * lg * (1.0 - (-2.0 * beta * h).exp()) / (2.0 * beta) } else { lg * lg * h };
        let mut next = state.clone();
        next.w = w;
        next.lambda_gauge = lg * (-beta * h).exp();
        next.s = state.s + h;
        next.t = state.t + dt;
        next.dt = dt;
        next.steps += 1;
        next.rejected += rejected;
        next.ds = h * (0.9 / err.max(1e-10).sqrt()).clamp(0.2, 2.0);
        let mut next = self.decompose(&next)?;
        next.energy = self.energy(&next.w, next.lambda_gauge);
        next.energy_change = (next.energy - state.energy) / state.energy;
        if next.energy_change > self.cfg.energy_tol {
            return Err(LabError::SolverFault(format!(
                "energy increased from {:e} to {:e} at s = {}",
                state.energy, next.energy, next.s
            )));
        }
        Ok(next)
    }

    /// 𝓔_{2m} = ∫_{y ≤ e2_radius} |𝓛^m q|² for m = 1 … m_max.
    pub fn sobolev_diagnostics(&self, state: &SimState, m_max: usize) -> Result<Vec<f64>> {
        if m_max > 2 {
            return Err(LabError::Parameter("m_max must be at most 2".into()));
        }
        let radius = self.cfg.e2_radius;
        let mut f = state.q.clone();
        let mut out = Vec::with_capacity(m_max);
        for _ in 0..m_max {
            f = apply_l(&self.ctx, &f)?;
            let sq = f.map_with_y(|y, v| if y <= radius { v * v } else { 0.0 });
            out.push(sq.with_origin(f.origin_exponent().map(|p| 2 * p)).integral());
        }
        Ok(out)
    }

    /// max_r |∂_r u| = max_y |∂_y w| / λ_g.
    pub fn gradient_max(&self, state: &SimState) -> f64 {
        state.w.differentiate(1).max_abs() / state.lambda_gauge
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub s: f64,
    pub lambda: f64,
    pub b: Vec<f64>,
    pub energy: f64,
    pub e2: f64,
    /// max_r |∂_r u|.
    pub grad_max: f64,
    /// t-increment since the previous row.
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Frame {
    pub step: usize,
    pub s: f64,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Blowup,
    NoBlowup,
    LeftRegime,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub outcome: Outcome,
    pub gauge: Gauge,
    /// Modulation is projected after every step by Newton on the orthogonality conditions.
    pub decomposition_scheme: String,
    #[serde(rename = "T")]
    pub t_blowup: f64,
    /// Slope of log λ against log(T − t).
    pub exponent: f64,
    /// Exponent of the fit λ = c (T − t)^q over the final two decades of λ, which also fixes T.
    pub exponent_nls: f64,
    pub expected_exponent: f64,
    #[serde(rename = "c")]
    pub prefactor: f64,
    #[serde(rename = "fit_residual")]
    pub fit_rms: f64,
    pub fit_window_lambda: (f64, f64),
    pub lambda_decades: f64,
    /// b_1 s / c_1 at the last sample.
    pub b1_s_over_c1: f64,
    /// Ratio of (T−t)^{1/2} max|∂_r u| between the last and first samples.
    pub type2_growth: f64,
    pub energy_non_increasing: bool,
    /// Largest relative energy change over one step.
    pub max_energy_change: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub max_orth_residual: f64,
}

#[derive(Debug, Clone)]
pub struct BlowupRun {
    pub config: SimConfig,
    pub rows: Vec<TrajectoryRow>,
    pub frames: Vec<Frame>,
    pub report: RateReport,
    pub final_state: SimState,
}

fn row(sim: &Simulator, st: &SimState) -> Result<TrajectoryRow> {
    Ok(TrajectoryRow {
        t: st.t,
        s: st.s,
        lambda: st.lambda,
        b: st.b.clone(),
        energy: st.energy,
        e2: sim.sobolev_diagnostics(st, 1)?[0],
        grad_max: sim.gradient_max(st),
        dt: st.dt,
    })
}

/// Initial remainder a·y³e^{−y²}.
pub fn default_q0(sim: &Simulator) -> Option<GridFunction> {
    let a = sim.cfg.q0_amplitude;
    (a != 0.0).then(|| GridFunction::from_fn(sim.ctx.grid(), Some(3), |y| a * y.powi(3) * (-y * y).exp()))
}

/// Integrates from b(s0) = b^e(s0) until λ ≤ λ_min or a budget is exhausted, then fits the rate.
pub fn run_blowup(cfg: SimConfig) -> Result<BlowupRun> {
    let sim = Simulator::new(cfg.clone())?;
    let b0 = explicit_solution(&sim.modes, cfg.s0)?;
    let q0 = default_q0(&sim);
    let state = sim.init_data(&b0, q0.as_ref())?;
    run_from(&sim, state)
}

pub fn run_from(sim: &Simulator, mut state: SimState) -> Result<BlowupRun> {
    let cfg = &sim.cfg;
    let clock = Instant::now();
    let mut rows = vec![row(sim, &state)?];
    let mut frames = Vec::new();
    let mut max_energy_change = f64::NEG_INFINITY;
    let mut max_orth = state.orth_residual;
    let mut outcome = Outcome::NoBlowup;
    while state.steps < cfg.max_steps && state.s < cfg.s_max && clock.elapsed().as_secs_f64() < cfg.wall_clock {
        let next = sim.step(&state)?;
        max_energy_change = max_energy_change.max(next.energy_change);
        max_orth = max_orth.max(next.orth_residual);
        state = next;
        rows.push(row(sim, &state)?);
        if cfg.frame_every > 0 && state.steps.is_multiple_of(cfg.frame_every) {
            frames.push(Frame { step: state.steps, s: state.s, w: state.w.values().to_vec() });
        }
        if state.lambda <= cfg.lambda_min {
            outcome = Outcome::Blowup;
            break;
        }
        if state.b[0] <= 0.0 && cfg.gauge == Gauge::FullModulation {
            outcome = Outcome::LeftRegime;
            break;
        }
    }
    let report = rate_report(sim, &rows, outcome, max_energy_change, &state, max_orth);
    Ok(BlowupRun { config: cfg.clone(), rows, frames, report, final_state: state })
}

/// Best (R, log c, q, rms) for log λ = log c + q log(τ + R) over R > 0; residuals are measured in
/// log λ so that large R, which flattens log(τ + R), is not rewarded.
fn fit_remaining_time(tau: &[f64], lam: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let ly: Vec<f64> = lam.iter().map(|l| l.ln()).collect();
    let eval = |r: f64| -> Option<(f64, f64, f64)> {
        let lx: Vec<f64> = tau.iter().map(|t| (t + r).ln()).collect();
        let f = linear_fit(&lx, &ly).ok()?;
        Some((f.intercept, f.slope, f.rms))
    };
    let scale = tau.iter().cloned().fold(0.0f64, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let (mut lo, mut hi) = ((scale * 1e-9).ln(), (scale * 10.0).ln());
    let mut best = (f64::INFINITY, 0.0);
    let samples = 200;
    for i in 0..=samples {
        let x = lo + (hi - lo) * i as f64 / samples as f64;
        if let Some((_, _, rms)) = eval(x.exp()) {
            if rms < best.0 {
                best = (rms, x);
            }
        }
    }
    let step = (hi - lo) / samples as f64;
    lo = best.1 - step;
    hi = best.1 + step;
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        let fa = eval(a.exp()).map(|e| e.2).unwrap_or(f64::INFINITY);
        let fb = eval(b.exp()).map(|e| e.2).unwrap_or(f64::INFINITY);
        if fa < fb {
            hi = b;
        } else {
            lo = a;
        }
    }
    let r = (0.5 * (lo + hi)).exp();
    eval(r).map(|(lc, q, rms)| (r, lc, q, rms))
}

fn rate_report(
    sim: &Simulator,
    rows: &[TrajectoryRow],
    outcome: Outcome,
    max_energy_change: f64,
    state: &SimState,
    max_orth: f64,
) -> RateReport {
    let n = rows.len();
    let expected = sim.cfg.ell as f64 / sim.modes.gamma;
    let mut rep = RateReport {
        outcome,
        gauge: sim.cfg.gauge,
        decomposition_scheme: "per-step Newton projection".into(),
        t_blowup: f64::NAN,
        exponent: f64::NAN,
        exponent_nls: f64::NAN,
        expected_exponent: expected,
        prefactor: f64::NAN,
        fit_rms: f64::NAN,
        fit_window_lambda: (f64::NAN, f64::NAN),
        lambda_decades: (rows[0].lambda / rows[n - 1].lambda).log10(),
        b1_s_over_c1: rows[n - 1].b[0] * rows[n - 1].s / sim.modes.c[0],
        type2_growth: f64::NAN,
        energy_non_increasing: max_energy_change <= sim.cfg.energy_tol,
        max_energy_change,
        steps: state.steps,
        rejected_steps: state.rejected,
        max_orth_residual: max_orth,
    };
    if n < 8 {
        return rep;
    }
    // τ_i = t_last − t_i from suffix sums of the increments.
    let mut tau = vec![0.0; n];
    for i in (0..n - 1).rev() {
        tau[i] = tau[i + 1] + rows[i + 1].dt;
    }
    let lam_last = rows[n - 1].lambda;
    let tail: Vec<usize> = (0..n - 1).filter(|&i| rows[i].lambda <= 100.0 * lam_last).collect();
    if tail.len() < 4 {
        return rep;
    }
    let tt: Vec<f64> = tail.iter().map(|&i| tau[i]).collect();
    let ll: Vec<f64> = tail.iter().map(|&i| rows[i].lambda).collect();
    let Some((r, _, q, _)) = fit_remaining_time(&tt, &ll) else { return rep };
    rep.t_blowup = rows[n - 1].t + r;
    rep.exponent_nls = q;
    let cut = 0.2 * rows[n - 1].lambda.ln().min(0.0);
    let window: Vec<usize> = (0..n).filter(|&i| rows[i].lambda.ln() <= cut).collect();
    if window.len() >= 3 {
        let lx: Vec<f64> = window.iter().map(|&i| (tau[i] + r).ln()).collect();
        let ly: Vec<f64> = window.iter().map(|&i| rows[i].lambda.ln()).collect();
        if let Ok(f) = linear_fit(&lx, &ly) {
            rep.exponent = f.slope;
            rep.prefactor = f.intercept.exp();
            rep.fit_rms = f.rms;
            rep.fit_window_lambda = (rows[window[0]].lambda, rows[*window.last().unwrap()].lambda);
        }
    }
    let indicator = |i: usize| (tau[i] + r).sqrt() * rows[i].grad_max;
    rep.type2_growth = indicator(n - 1) / indicator(0);
    rep
}
