//! Truncated Taylor series ("jets") for exact local differentiation.

use std::ops::{Add, Mul, Neg, Sub};

/// Coefficients c_k = f^{(k)}(x₀)/k! for k = 0 … degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub c: Vec<f64>,
}

impl Jet {
    pub fn constant(v: f64, degree: usize) -> Self {
        let mut c = vec![0.0; degree + 1];
        c[0] = v;
        Jet { c }
    }

    /// The identity map shifted to x₀: x₀ + ε.
    pub fn variable(x0: f64, degree: usize) -> Self {
        let mut j = Jet::constant(x0, degree);
        if degree > 0 {
            j.c[1] = 1.0;
        }
        j
    }

    pub fn degree(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet { c: self.c.iter().map(|v| v * s).collect() }
    }

    /// Derivative; the degree drops by one.
    pub fn derivative(&self) -> Jet {
        let n = self.degree();
        if n == 0 {
            return Jet::constant(0.0, 0);
        }
        Jet { c: (1..=n).map(|k| k as f64 * self.c[k]).collect() }
    }

    pub fn truncate(&self, degree: usize) -> Jet {
        Jet { c: self.c[..=degree.min(self.degree())].to_vec() }
    }

    pub fn recip(&self) -> Jet {
        let n = self.degree();
        let mut r = vec![0.0; n + 1];
        r[0] = 1.0 / self.c[0];
        for k in 1..=n {
            let s: f64 = (1..=k).map(|j| self.c[j] * r[k - j]).sum();
            r[k] = -s * r[0];
        }
        Jet { c: r }
    }

    pub fn exp(&self) -> Jet {
        let n = self.degree();
        let mut e = vec![0.0; n + 1];
        e[0] = self.c[0].exp();
        for k in 1..=n {
            let s: f64 = (1..=k).map(|j| j as f64 * self.c[j] * e[k - j]).sum();
            e[k] = s / k as f64;
        }
        Jet { c: e }
    }

    /// (sin, cos) of the series.
    pub fn sin_cos(&self) -> (Jet, Jet) {
        let n = self.degree();
        let mut s = vec![0.0; n + 1];
        let mut c = vec![0.0; n + 1];
        s[0] = self.c[0].sin();
        c[0] = self.c[0].cos();
        for k in 1..=n {
            let mut a = 0.0;
            let mut b = 0.0;
            for j in 1..=k {
                let t = j as f64 * self.c[j];
                a += t * c[k - j];
                b += t * s[k - j];
            }
            s[k] = a / k as f64;
            c[k] = -b / k as f64;
        }
        (Jet { c: s }, Jet { c })
    }
}

fn common(a: &Jet, b: &Jet) -> usize {
    a.degree().min(b.degree())
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        let n = common(self, o);
        Jet { c: (0..=n).map(|k| self.c[k] + o.c[k]).collect() }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        let n = common(self, o);
        Jet { c: (0..=n).map(|k| self.c[k] - o.c[k]).collect() }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        let n = common(self, o);
        Jet { c: (0..=n).map(|k| (0..=k).map(|j| self.c[j] * o.c[k - j]).sum()).collect() }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Jet of v = π/2 − Q at a node from (v, v_x), using v_xx + (d−2)v_x + (d−1)/2·sin 2v = 0 in x = ln y.
pub fn profile_deficit_jet(v: f64, vx: f64, d: f64, degree: usize) -> Jet {
    let mut c = vec![0.0; degree + 1];
    c[0] = v;
    if degree >= 1 {
        c[1] = vx;
    }
    // Running sin/cos coefficients of u = 2v.
    let mut s = vec![0.0; degree + 1];
    let mut co = vec![0.0; degree + 1];
    s[0] = (2.0 * v).sin();
    co[0] = (2.0 * v).cos();
    for k in 0..degree.saturating_sub(1) {
        if k >= 1 {
            let mut a = 0.0;
            let mut b = 0.0;
            for j in 1..=k {
                let t = j as f64 * 2.0 * c[j];
                a += t * co[k - j];
                b += t * s[k - j];
            }
            s[k] = a / k as f64;
            co[k] = -b / k as f64;
        }
        let kf = k as f64;
        c[k + 2] = (-(d - 2.0) * (kf + 1.0) * c[k + 1] - 0.5 * (d - 1.0) * s[k]) / ((kf + 2.0) * (kf + 1.0));
    }
    Jet { c }
}

/// Jet of the cutoff χ(t) for a jet argument t.
pub fn chi_jet(t: &Jet) -> Jet {
    let n = t.degree();
    let t0 = t.value();
    if t0 <= 1.0 {
        return Jet::constant(1.0, n);
    }
    if t0 >= 2.0 {
        return Jet::constant(0.0, n);
    }
    // χ = 1 / (1 + e^u) with u = 1/(2−t) − 1/(t−1).
    let one = Jet::constant(1.0, n);
    let two = Jet::constant(2.0, n);
    let u = &(&two - t).recip() - &(t - &one).recip();
    if u.value() < -700.0 {
        return Jet::constant(1.0, n);
    }
    if u.value() > 700.0 {
        return Jet::constant(0.0, n);
    }
    (&one + &u.exp()).recip()
}
