use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};

/// Banded matrix with lower/upper bandwidths, factored by Gaussian elimination
/// with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
    factored: bool,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let w = 2 * kl + ku + 1;
        Self { n, kl, ku, a: vec![0.0; n * w], piv: vec![0; n], factored: false }
    }

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width() + (j + self.kl - i)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            0.0
        } else {
            self.a[self.idx(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i},{j}) outside band");
        let k = self.idx(i, j);
        self.a[k] += v;
    }

    /// y = A x (before factorization).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.a[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    pub fn factor(&mut self) -> Result<()> {
        let n = self.n;
        let reach = self.kl + self.ku;
        for k in 0..n {
            let last = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.a[self.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = self.a[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(LabError::SolverFault(format!("singular band matrix at column {k}")));
            }
            self.piv[k] = p;
            let jmax = (k + reach).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.a.swap(a, b);
                }
            }
            let pivot = self.a[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let l = self.a[ik] / pivot;
                self.a[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let kj = self.a[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.a[ij] -= l * kj;
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored, "factor before solving");
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                b[i] -= self.a[self.idx(i, k)] * bk;
            }
        }
        let reach = self.kl + self.ku;
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + reach).min(n - 1) {
                s -= self.a[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.a[self.idx(i, i)];
        }
    }
}

/// Eigenpairs of a real matrix with real spectrum, sorted by eigenvalue.
/// Eigenvectors are unit columns spanning the null space of A − λI.
pub fn real_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let ev = m.clone().complex_eigenvalues();
    let scale = m.abs().max().max(1.0);
    let mut vals = Vec::with_capacity(n);
    for z in ev.iter() {
        if z.im.abs() > 1e-9 * scale {
            return Err(LabError::Domain(format!("complex eigenvalue {z}")));
        }
        vals.push(z.re);
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &lam) in vals.iter().enumerate() {
        let shifted = m - DMatrix::identity(n, n) * lam;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.ok_or_else(|| LabError::Internal("svd failed".into()))?;
        let (imin, _) =
            svd.singular_values
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let mut v: DVector<f64> = vt.row(imin).transpose();
        let (big, _) =
            v.iter().enumerate().fold((0, 0.0), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
        if v[big] < 0.0 {
            v = -v;
        }
        vecs.set_column(c, &v);
    }
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_solve_matches_dense() {
        let n = 40;
        let (kl, ku) = (3, 2);
        let mut b = BandMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = ((i * 7 + j * 3) % 11) as f64 - 5.0 + if i == j { 0.5 } else { 0.0 };
                b.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = rhs.clone();
        b.factor().unwrap();
        b.solve(&mut x);
        let r = &dense * DVector::from_vec(x) - DVector::from_vec(rhs);
        assert!(r.amax() < 1e-10);
    }

    #[test]
    fn eigenpairs_of_triangular_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 0.0]);
        let (vals, vecs) = real_eigen(&m).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        for c in 0..2 {
            let v = vecs.column(c);
            let r = &m * v - v * vals[c];
            assert!(r.amax() < 1e-12);
        }
    }
}
