use std::sync::Arc;

use crate::error::{LabError, Result};

/// Finite-difference weights at `z` for nodes `xs`, derivative orders `0..=m`.
pub fn fd_weights(z: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[derive(Debug, Clone)]
struct Stencil {
    start: isize,
    weights: Vec<f64>,
}

/// Log-uniform radial grid with quadrature for the measure y^{d-1} dy and
/// finite-difference stencils in x = ln y.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    d: usize,
    y: Vec<f64>,
    x0: f64,
    h: f64,
    weights: Vec<f64>,
    gregory: Vec<f64>,
    order: usize,
    central: [Stencil; 2],
    left: [Vec<Stencil>; 2],
    right: [Vec<Stencil>; 2],
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d
            && self.y.len() == other.y.len()
            && self.x0 == other.x0
            && self.h == other.h
            && self.order == other.order
    }
}

/// Builds a log-uniform grid with the default stencil order 4.
pub fn make_grid(d: usize, y_min: f64, y_max: f64, n: usize) -> Result<Arc<RadialGrid>> {
    RadialGrid::new(d, y_min, y_max, n, 4).map(Arc::new)
}

fn gregory_weights(n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n];
    let ends = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    for (k, e) in ends.iter().enumerate() {
        w[k] = *e;
        w[n - 1 - k] = *e;
    }
    w
}

impl RadialGrid {
    pub fn new(d: usize, y_min: f64, y_max: f64, n: usize, order: usize) -> Result<Self> {
        if d < 7 {
            return Err(LabError::Parameter(format!("dimension d = {d} must be at least 7")));
        }
        if !(y_min > 0.0 && y_min < 1.0 && y_max > 1.0 && y_max.is_finite()) {
            return Err(LabError::Parameter(format!(
                "need 0 < y_min < 1 < y_max, got y_min = {y_min}, y_max = {y_max}"
            )));
        }
        if n < 64 {
            return Err(LabError::Parameter(format!("need n >= 64 nodes, got {n}")));
        }
        if !(order == 4 || order == 6) {
            return Err(LabError::Parameter(format!("stencil order must be 4 or 6, got {order}")));
        }
        let x0 = y_min.ln();
        let h = (y_max.ln() - x0) / (n - 1) as f64;
        let y: Vec<f64> = (0..n).map(|i| if i == n - 1 { y_max } else { (x0 + h * i as f64).exp() }).collect();
        let gregory = gregory_weights(n);
        let weights = y.iter().zip(&gregory).map(|(yi, g)| h * g * yi.powi(d as i32)).collect();

        let r = (order / 2) as isize;
        let scale = [1.0 / h, 1.0 / (h * h)];
        let make = |start: isize, len: usize, at: isize, k: usize| -> Stencil {
            let xs: Vec<f64> = (0..len).map(|j| (start + j as isize - at) as f64).collect();
            let w = fd_weights(0.0, &xs, k);
            Stencil { start: start - at, weights: w[k].iter().map(|v| v * scale[k - 1]).collect() }
        };
        let central = [make(-r, order + 1, 0, 1), make(-r, order + 1, 0, 2)];
        let mut left = [Vec::new(), Vec::new()];
        let mut right = [Vec::new(), Vec::new()];
        for (k, len) in [(1usize, order + 1), (2, order + 2)] {
            for i in 0..r {
                left[k - 1].push(make(0, len, i, k));
                right[k - 1].push(make(-(len as isize - 1) + i, len, 0, k));
            }
        }
        Ok(Self { d, y, x0, h, weights, gregory, order, central, left, right })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn len(&self) -> usize {
        self.y.len()
    }
    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
    pub fn nodes(&self) -> &[f64] {
        &self.y
    }
    pub fn y_min(&self) -> f64 {
        self.y[0]
    }
    pub fn y_max(&self) -> f64 {
        self.y[self.y.len() - 1]
    }
    /// Log spacing h = ln(y_{i+1}/y_i).
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn stencil_order(&self) -> usize {
        self.order
    }
    /// Quadrature weights for ∫ f y^{d-1} dy over [y_min, y_max].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the first node with y_i ≥ y.
    pub fn index_at_or_above(&self, y: f64) -> usize {
        if y <= self.y[0] {
            return 0;
        }
        let i = ((y.ln() - self.x0) / self.h).ceil() as usize;
        let mut i = i.min(self.len() - 1);
        while i > 0 && self.y[i - 1] >= y {
            i -= 1;
        }
        while i + 1 < self.len() && self.y[i] < y {
            i += 1;
        }
        i
    }

    /// Ghost values f(y_{-k}), k = 1..=r, from a fit y^p (a + b y²) to the first two nodes.
    pub fn origin_ghosts(&self, v: &[f64], p: i32) -> Vec<f64> {
        let r = self.order / 2;
        let (a, b) = self.origin_fit(v, p);
        (1..=r)
            .map(|k| {
                let yk = (self.x0 - self.h * k as f64).exp();
                yk.powi(p) * (a + b * yk * yk)
            })
            .collect()
    }

    /// Coefficients (a, b) of f ≈ y^p (a + b y²) through the first two nodes.
    pub fn origin_fit(&self, v: &[f64], p: i32) -> (f64, f64) {
        let (y0, y1) = (self.y[0], self.y[1]);
        let (u0, u1) = (v[0] / y0.powi(p), v[1] / y1.powi(p));
        let b = (u1 - u0) / (y1 * y1 - y0 * y0);
        (u0 - b * y0 * y0, b)
    }

    /// Linear ghost coefficients: ghost_k = c[k][0] v_0 + c[k][1] v_1.
    pub fn origin_ghost_coefficients(&self, p: i32) -> Vec<[f64; 2]> {
        let e0 = self.origin_ghosts(&[1.0, 0.0], p);
        let e1 = self.origin_ghosts(&[0.0, 1.0], p);
        e0.into_iter().zip(e1).map(|(a, b)| [a, b]).collect()
    }

    /// Stencil rows for x-derivative of order `k` at node `i`: list of (index, weight),
    /// where negative indices denote origin ghosts (−1 is the first ghost).
    pub fn stencil_row(&self, i: usize, k: usize, ghosts: bool) -> Vec<(isize, f64)> {
        let n = self.len();
        let r = self.order / 2;
        let st = if i < r && !ghosts {
            &self.left[k - 1][i]
        } else if i + r >= n {
            &self.right[k - 1][n - 1 - i]
        } else {
            &self.central[k - 1]
        };
        st.weights.iter().enumerate().map(|(j, w)| (i as isize + st.start + j as isize, *w)).collect()
    }

    /// x-derivative D^k v with optional origin exponent for ghost values.
    pub fn dx_k(&self, v: &[f64], k: usize, origin: Option<i32>) -> Vec<f64> {
        let ghosts = origin.map(|p| self.origin_ghosts(v, p));
        let get = |j: isize| -> f64 {
            if j >= 0 {
                v[j as usize]
            } else {
                ghosts.as_ref().expect("ghost requested")[(-j - 1) as usize]
            }
        };
        (0..self.len())
            .map(|i| self.stencil_row(i, k, ghosts.is_some()).into_iter().map(|(j, w)| w * get(j)).sum())
            .collect()
    }

    /// Quadrature of ∫_0^{y_max} f y^{d-1} dy; the [0, y_min] cell uses f ≈ c y^p.
    pub fn integrate(&self, v: &[f64], origin: Option<f64>) -> f64 {
        let body: f64 = self.weights.iter().zip(v).map(|(w, f)| w * f).sum();
        let p = origin.or_else(|| local_exponent(v[0], v[1], self.h));
        let d = self.d as f64;
        let cell = match p {
            Some(p) if p + d > 0.0 => v[0] * self.y[0].powi(self.d as i32) / (p + d),
            _ => 0.0,
        };
        body + cell
    }

    /// Cumulative ∫_0^{y_i} g dy (plain measure) with fourth-order interval rules in x.
    pub fn cumulative_from_origin(&self, g: &[f64]) -> Vec<f64> {
        let n = self.len();
        let f: Vec<f64> = g.iter().zip(&self.y).map(|(a, y)| a * y).collect();
        let mut out = vec![0.0; n];
        out[0] = match local_exponent(g[0], g[1], self.h) {
            Some(p) if p > -1.0 => g[0] * self.y[0] / (p + 1.0),
            _ => 0.0,
        };
        for i in 0..n - 1 {
            out[i + 1] = out[i] + self.interval(&f, i);
        }
        out
    }

    /// Cumulative ∫_{y_i}^{y_max} g dy (plain measure).
    pub fn cumulative_to_end(&self, g: &[f64]) -> Vec<f64> {
        let n = self.len();
        let f: Vec<f64> = g.iter().zip(&self.y).map(|(a, y)| a * y).collect();
        let mut out = vec![0.0; n];
        for i in (0..n - 1).rev() {
            out[i] = out[i + 1] + self.interval(&f, i);
        }
        out
    }

    fn interval(&self, f: &[f64], i: usize) -> f64 {
        let n = f.len();
        let c = self.h / 24.0;
        if i == 0 {
            c * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
        } else if i == n - 2 {
            c * (f[n - 4] - 5.0 * f[n - 3] + 19.0 * f[n - 2] + 9.0 * f[n - 1])
        } else {
            c * (-f[i - 1] + 13.0 * f[i] + 13.0 * f[i + 1] - f[i + 2])
        }
    }

    /// Trapezoid-with-endpoint-correction weights in x (no measure).
    pub fn gregory(&self) -> &[f64] {
        &self.gregory
    }

    /// Sixth-order Lagrange interpolation in x at radius `y` (clamped to the grid).
    pub fn interpolate(&self, v: &[f64], y: f64, origin: Option<i32>) -> f64 {
        let n = self.len();
        let t = (y.ln() - self.x0) / self.h;
        if t <= 0.0 {
            return match origin {
                Some(p) => {
                    let (a, b) = self.origin_fit(v, p);
                    y.powi(p) * (a + b * y * y)
                }
                None => v[0],
            };
        }
        if t >= (n - 1) as f64 {
            return v[n - 1];
        }
        let (base, l) = self.interpolation_stencil(y);
        (0..6).map(|j| l[j] * v[base + j]).sum()
    }

    /// First node and weights of the six-point Lagrange interpolant at an interior radius `y`.
    pub fn interpolation_stencil(&self, y: f64) -> (usize, [f64; 6]) {
        let n = self.len();
        let t = ((y.ln() - self.x0) / self.h).clamp(0.0, (n - 1) as f64);
        let base = (t.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
        let mut w = [1.0; 6];
        for (j, wj) in w.iter_mut().enumerate() {
            let xj = (base + j) as f64;
            for m in 0..6 {
                if m != j {
                    let xm = (base + m) as f64;
                    *wj *= (t - xm) / (xj - xm);
                }
            }
        }
        (base, w)
    }
}

/// Local power p with g ≈ c y^p from two adjacent nodes, if well defined.
pub fn local_exponent(g0: f64, g1: f64, h: f64) -> Option<f64> {
    if g0 != 0.0 && g1 != 0.0 && g0.signum() == g1.signum() {
        Some((g1 / g0).ln() / h)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_weights_match_classical_central_stencil() {
        let w = fd_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        let d1 = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        let d2 = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
        for j in 0..5 {
            assert!((w[1][j] - d1[j]).abs() < 1e-14);
            assert!((w[2][j] - d2[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_is_log_uniform() {
        let g = make_grid(8, 1e-4, 1e4, 1024).unwrap();
        let y = g.nodes();
        let r0 = y[1] / y[0];
        for i in 0..y.len() - 1 {
            assert!((y[i + 1] / y[i] - r0).abs() < 1e-12);
        }
        assert_eq!(y.len(), 1024);
        assert!(g.weights().iter().all(|w| *w > 0.0));
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        assert!(make_grid(6, 1e-4, 1e4, 512).is_err());
        assert!(make_grid(7, 2.0, 1e4, 512).is_err());
        assert!(make_grid(7, 1e-4, 0.5, 512).is_err());
        assert!(make_grid(7, 1e-4, 1e4, 32).is_err());
    }

    #[test]
    fn index_lookup_brackets_value() {
        let g = make_grid(7, 1e-3, 1e3, 500).unwrap();
        for &y in &[1e-3, 0.5, 1.0, 7.3, 999.0] {
            let i = g.index_at_or_above(y);
            assert!(g.nodes()[i] >= y * (1.0 - 1e-12));
            if i > 0 {
                assert!(g.nodes()[i - 1] < y);
            }
        }
    }

    #[test]
    fn interpolation_reproduces_smooth_function() {
        let g = make_grid(7, 1e-3, 1e3, 800).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|y| (y / (1.0 + y)).atan()).collect();
        for &y in &[0.0123_f64, 0.77, 3.3, 410.0] {
            let e = (y / (1.0 + y)).atan();
            assert!((g.interpolate(&v, y, Some(1)) - e).abs() < 1e-9);
        }
    }
}
