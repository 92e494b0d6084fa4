/// Smooth nonincreasing cutoff, 1 on [0, 1] and 0 on [2, ∞).
pub fn chi(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        let a = psi(2.0 - t);
        a / (a + psi(t - 1.0))
    }
}

/// First and second derivatives of [`chi`] in its argument.
pub fn chi_derivs(t: f64) -> (f64, f64) {
    if t <= 1.0 || t >= 2.0 {
        return (0.0, 0.0);
    }
    // χ = a/(a+b) with a = ψ(2−t), b = ψ(t−1); ψ(s) = e^{−1/s}, ψ' = ψ/s², ψ'' = ψ(1−2s)/s⁴.
    let (u, v) = (2.0 - t, t - 1.0);
    let (a, b) = (psi(u), psi(v));
    let (a1, b1) = (-a / (u * u), b / (v * v));
    let (a2, b2) = (a * (1.0 - 2.0 * u) / u.powi(4), b * (1.0 - 2.0 * v) / v.powi(4));
    let s = a + b;
    let s1 = a1 + b1;
    let s2 = a2 + b2;
    let d1 = (a1 * s - a * s1) / (s * s);
    let d2 = (a2 * s - a * s2) / (s * s) - 2.0 * s1 * (a1 * s - a * s1) / (s * s * s);
    (d1, d2)
}

fn psi(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_limits_and_monotone() {
        assert_eq!(chi(0.3), 1.0);
        assert_eq!(chi(2.5), 0.0);
        assert!((chi(1.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=100 {
            let c = chi(1.0 + f64::from(i) / 100.0);
            assert!(c <= prev + 1e-15);
            prev = c;
        }
    }

    #[test]
    fn derivatives_match_differences() {
        for &t in &[1.1, 1.37, 1.5, 1.8, 1.95] {
            let h = 1e-5;
            let (d1, d2) = chi_derivs(t);
            let fd1 = (chi(t + h) - chi(t - h)) / (2.0 * h);
            let fd2 = (chi(t + h) - 2.0 * chi(t) + chi(t - h)) / (h * h);
            assert!((d1 - fd1).abs() < 1e-7);
            assert!((d2 - fd2).abs() < 1e-4);
        }
    }
}
