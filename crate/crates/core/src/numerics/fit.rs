use crate::error::{LabError, Result};

/// Ordinary least-squares line y = intercept + slope·x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms: f64,
    /// Standard error of the slope.
    pub slope_stderr: f64,
    pub count: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(LabError::TailFit(format!("need at least two points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return Err(LabError::TailFit("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let rms = (ss / nf).sqrt();
    let slope_stderr = if n > 2 { (ss / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LinearFit { slope, intercept, rms, slope_stderr, count: n })
}

/// Power law v ≈ amplitude·y^exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub amplitude: f64,
    pub exponent: f64,
    /// RMS residual in log space.
    pub rms: f64,
    pub exponent_stderr: f64,
}

/// Log-log fit of v against y restricted to y ∈ [a, b]; the data must keep one sign.
pub fn power_law_fit(y: &[f64], v: &[f64], a: f64, b: f64) -> Result<PowerFit> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut sign = 0.0;
    for (&yi, &vi) in y.iter().zip(v) {
        if yi < a * (1.0 - 1e-12) || yi > b * (1.0 + 1e-12) {
            continue;
        }
        if vi == 0.0 || !vi.is_finite() {
            return Err(LabError::TailFit(format!("zero or non-finite value at y = {yi}")));
        }
        if sign == 0.0 {
            sign = vi.signum();
        } else if vi.signum() != sign {
            return Err(LabError::TailFit(format!("sign change near y = {yi}")));
        }
        lx.push(yi.ln());
        ly.push(vi.abs().ln());
    }
    let f = linear_fit(&lx, &ly)?;
    Ok(PowerFit { amplitude: sign * f.intercept.exp(), exponent: f.slope, rms: f.rms, exponent_stderr: f.slope_stderr })
}

/// Growth exponent of the envelope max|v| between the two halves (in log y) of [a, b].
pub fn envelope_exponent(y: &[f64], v: &[f64], a: f64, b: f64) -> Option<f64> {
    let mid = (a * b).sqrt();
    let mut lo = 0.0_f64;
    let mut hi = 0.0_f64;
    for (&yi, &vi) in y.iter().zip(v) {
        if yi >= a && yi < mid {
            lo = lo.max(vi.abs());
        } else if yi >= mid && yi <= b {
            hi = hi.max(vi.abs());
        }
    }
    if lo > 0.0 && hi > 0.0 {
        Some((hi / lo).ln() / (b / mid).ln())
    } else {
        None
    }
}

/// Convergence order from errors at successive 2× refinements.
pub fn refinement_order(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_is_recovered_exactly() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!(f.rms < 1e-14);
    }

    #[test]
    fn power_law_recovered_with_sign() {
        let y: Vec<f64> = (1..50).map(|i| f64::from(i) * 0.3).collect();
        let v: Vec<f64> = y.iter().map(|t| -3.0 * t.powf(-1.7)).collect();
        let f = power_law_fit(&y, &v, 1.0, 10.0).unwrap();
        assert!((f.exponent + 1.7).abs() < 1e-12);
        assert!((f.amplitude + 3.0).abs() < 1e-11);
    }

    #[test]
    fn sign_change_is_an_error() {
        let y = [1.0, 2.0, 3.0];
        let v = [1.0, -1.0, 1.0];
        assert!(power_law_fit(&y, &v, 1.0, 3.0).is_err());
    }
}
