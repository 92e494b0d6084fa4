use crate::error::{LabError, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Dormand–Prince 5(4) integrator with step-size control.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_init: Option<f64>,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_steps: 2_000_000, h_init: None }
    }
}

/// Samples at the requested output times, possibly truncated by a stop condition.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub stopped: bool,
    pub steps: usize,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }

    /// Integrates y' = f(t, y) from t0, recording the state at each (increasing) output time.
    pub fn solve<F>(&self, f: F, t0: f64, y0: &[f64], outputs: &[f64]) -> Result<OdeSolution>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        self.solve_until(f, t0, y0, outputs, |_, _| false)
    }

    /// As [`Dopri5::solve`], but stops at the first output where `stop(t, y)` holds.
    pub fn solve_until<F, S>(&self, mut f: F, t0: f64, y0: &[f64], outputs: &[f64], mut stop: S) -> Result<OdeSolution>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        S: FnMut(f64, &[f64]) -> bool,
    {
        let n = y0.len();
        let mut t = t0;
        let mut y = y0.to_vec();
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
        let mut tmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];
        let mut out = OdeSolution { t: Vec::new(), y: Vec::new(), stopped: false, steps: 0 };
        let Some(&t_last) = outputs.last() else { return Ok(out) };
        if outputs.windows(2).any(|w| w[1] <= w[0]) || outputs[0] < t0 {
            return Err(LabError::Parameter("output times must increase from t0".into()));
        }
        f(t, &y, &mut k[0]);
        let h = self.h_init.unwrap_or_else(|| initial_step(&k[0], &y, self.rtol, self.atol, t_last - t0));
        let mut next = 0;
        while next < outputs.len() && outputs[next] <= t0 {
            out.t.push(t0);
            out.y.push(y.clone());
            next += 1;
        }
        let mut fac_old = 1e-4_f64;
        let mut h_next = h;
        while next < outputs.len() {
            let h = h_next;
            if out.steps >= self.max_steps {
                return Err(LabError::Integrator(format!("step budget exhausted at t = {t}")));
            }
            let target = outputs[next];
            let hit = t + h >= target;
            let h_prop = h;
            let h = if hit { target - t } else { h };
            if h.abs() < 1e-14 * t.abs().max(1.0) && !hit {
                return Err(LabError::Integrator(format!("step size underflow at t = {t}")));
            }
            let stage = |coef: &[f64], k: &[Vec<f64>], tmp: &mut Vec<f64>, y: &[f64], h: f64| {
                for i in 0..n {
                    let mut s = 0.0;
                    for (j, c) in coef.iter().enumerate() {
                        s += c * k[j][i];
                    }
                    tmp[i] = y[i] + h * s;
                }
            };
            stage(&[A21], &k, &mut tmp, &y, h);
            f(t + C2 * h, &tmp, &mut k[1]);
            stage(&[A31, A32], &k, &mut tmp, &y, h);
            f(t + C3 * h, &tmp, &mut k[2]);
            stage(&[A41, A42, A43], &k, &mut tmp, &y, h);
            f(t + C4 * h, &tmp, &mut k[3]);
            stage(&[A51, A52, A53, A54], &k, &mut tmp, &y, h);
            f(t + C5 * h, &tmp, &mut k[4]);
            stage(&[A61, A62, A63, A64, A65], &k, &mut tmp, &y, h);
            f(t + h, &tmp, &mut k[5]);
            stage(&[B1, 0.0, B3, B4, B5, B6], &k, &mut ynew, &y, h);
            f(t + h, &ynew, &mut k[6]);
            out.steps += 1;

            let mut err = 0.0;
            for i in 0..n {
                let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                let sc = self.atol + self.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                h_next = h * 0.1;
                continue;
            }
            // PI step-size controller.
            let fac11 = err.max(1e-10).powf(0.17);
            let fac = (fac11 / fac_old.powf(0.04) / 0.9).clamp(0.2, 10.0);
            let hnew = h / fac;
            if err <= 1.0 {
                fac_old = err.max(1e-4);
                t = if hit { target } else { t + h };
                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6);
                if hit {
                    out.t.push(t);
                    out.y.push(y.clone());
                    next += 1;
                    if stop(t, &y) {
                        out.stopped = true;
                        break;
                    }
                    h_next = hnew.max(h_prop);
                } else {
                    h_next = hnew;
                }
            } else {
                h_next = h / (fac11 / 0.9).min(5.0);
            }
        }
        Ok(out)
    }
}

fn initial_step(f0: &[f64], y0: &[f64], rtol: f64, atol: f64, span: f64) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (f, y) in f0.iter().zip(y0) {
        let sc = atol + rtol * y.abs();
        d0 += (y / sc).powi(2);
        d1 += (f / sc).powi(2);
    }
    let h = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * (d0 / d1).sqrt() };
    h.min(span.abs()).max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let s = Dopri5::new(1e-11, 1e-14);
        let outs: Vec<f64> = (1..=10).map(f64::from).collect();
        let sol = s.solve(|_, y, dy| dy[0] = -y[0], 0.0, &[1.0], &outs).unwrap();
        for (t, y) in sol.t.iter().zip(&sol.y) {
            assert!((y[0] - (-t).exp()).abs() < 1e-10 * (-t).exp() + 1e-14);
        }
    }

    #[test]
    fn harmonic_oscillator_keeps_phase() {
        let s = Dopri5::new(1e-10, 1e-12);
        let sol = s
            .solve(
                |_, y, dy| {
                    dy[0] = y[1];
                    dy[1] = -y[0];
                },
                0.0,
                &[0.0, 1.0],
                &[std::f64::consts::PI * 10.0],
            )
            .unwrap();
        assert!(sol.y[0][0].abs() < 1e-8);
        assert!((sol.y[0][1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn stop_condition_truncates() {
        let s = Dopri5::default();
        let outs: Vec<f64> = (1..=100).map(|i| f64::from(i) * 0.1).collect();
        let sol = s.solve_until(|_, _, dy| dy[0] = 1.0, 0.0, &[0.0], &outs, |_, y| y[0] > 1.0).unwrap();
        assert!(sol.stopped);
        assert!((sol.t.last().unwrap() - 1.1).abs() < 1e-12);
    }
}
