use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::numerics::{GridFunction, RadialGrid};

/// Polynomial in b = (b_1 … b_L) with grid-function coefficients.
///
/// Keys are exponent vectors m = (m_1 … m_L); every key of a homogeneous
/// expansion satisfies Σ j·m_j = p₃.
#[derive(Debug, Clone)]
pub struct MonomialExpansion {
    grid: Arc<RadialGrid>,
    nvars: usize,
    /// (p₁, p₂, p₃); p₁ and p₂ are the declared admissibility degrees.
    pub degree: (usize, i32, usize),
    terms: BTreeMap<Vec<u32>, Vec<f64>>,
    origin_exponent: Option<i32>,
}

pub fn weighted_degree(m: &[u32]) -> usize {
    m.iter().enumerate().map(|(j, &e)| (j + 1) * e as usize).sum()
}

impl MonomialExpansion {
    pub fn zero(grid: &Arc<RadialGrid>, nvars: usize, degree: (usize, i32, usize)) -> Self {
        Self { grid: grid.clone(), nvars, degree, terms: BTreeMap::new(), origin_exponent: None }
    }

    /// c(y)·b_j (1-based j).
    pub fn linear(grid: &Arc<RadialGrid>, nvars: usize, j: usize, coeff: &[f64]) -> Self {
        let mut m = vec![0; nvars];
        m[j - 1] = 1;
        let mut e = Self::zero(grid, nvars, (j, j as i32, j));
        e.terms.insert(m, coeff.to_vec());
        e
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn nvars(&self) -> usize {
        self.nvars
    }
    pub fn len(&self) -> usize {
        self.terms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn with_degree(mut self, degree: (usize, i32, usize)) -> Self {
        self.degree = degree;
        self
    }
    pub fn with_origin(mut self, p: Option<i32>) -> Self {
        self.origin_exponent = p;
        self
    }
    pub fn origin_exponent(&self) -> Option<i32> {
        self.origin_exponent
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Vec<f64>)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &[u32]) -> Option<GridFunction> {
        self.terms.get(m).map(|v| GridFunction::new(self.grid.clone(), v.clone(), self.origin_exponent))
    }

    pub fn add_term(&mut self, m: Vec<u32>, c: &[f64]) {
        let slot = self.terms.entry(m).or_insert_with(|| vec![0.0; c.len()]);
        for (s, v) in slot.iter_mut().zip(c) {
            *s += v;
        }
    }

    pub fn add_assign(&mut self, other: &MonomialExpansion) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c);
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_coeffs(|c| c.iter().map(|v| v * s).collect())
    }

    /// Applies a map to every coefficient.
    pub fn map_coeffs(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let terms = self.terms.iter().map(|(m, c)| (m.clone(), f(c))).collect();
        Self { terms, ..self.empty_like() }
    }

    pub fn try_map_coeffs(&self, mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Self> {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            terms.insert(m.clone(), f(c)?);
        }
        Ok(Self { terms, ..self.empty_like() })
    }

    pub fn empty_like(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            nvars: self.nvars,
            degree: self.degree,
            terms: BTreeMap::new(),
            origin_exponent: self.origin_exponent,
        }
    }

    /// Pointwise multiplication of every coefficient by g(y).
    pub fn mul_fn(&self, g: &[f64]) -> Self {
        self.map_coeffs(|c| c.iter().zip(g).map(|(a, b)| a * b).collect())
    }

    pub fn mul(&self, other: &MonomialExpansion) -> Self {
        let mut out = Self::zero(&self.grid, self.nvars, (0, 0, self.degree.2 + other.degree.2));
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m: Vec<u32> = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                let c: Vec<f64> = ca.iter().zip(cb).map(|(a, b)| a * b).collect();
                out.add_term(m, &c);
            }
        }
        out
    }

    /// Multiplication by b_j (1-based).
    pub fn times_b(&self, j: usize) -> Self {
        let mut out = self.empty_like();
        out.degree.2 += j;
        for (m, c) in &self.terms {
            let mut m = m.clone();
            m[j - 1] += 1;
            out.terms.insert(m, c.clone());
        }
        out
    }

    /// ∂/∂b_j (1-based).
    pub fn partial(&self, j: usize) -> Self {
        let mut out = self.empty_like();
        out.degree.2 = out.degree.2.saturating_sub(j);
        for (m, c) in &self.terms {
            if m[j - 1] > 0 {
                let e = m[j - 1] as f64;
                let mut m = m.clone();
                m[j - 1] -= 1;
                out.add_term(m, &c.iter().map(|v| v * e).collect::<Vec<_>>());
            }
        }
        out
    }

    pub fn monomial_value(m: &[u32], b: &[f64]) -> f64 {
        m.iter().zip(b).map(|(&e, &bj)| bj.powi(e as i32)).product()
    }

    pub fn evaluate(&self, b: &[f64]) -> Result<GridFunction> {
        if b.len() != self.nvars {
            return Err(LabError::Usage(format!("expected {} parameters, got {}", self.nvars, b.len())));
        }
        let mut v = vec![0.0; self.grid.len()];
        for (m, c) in &self.terms {
            let w = Self::monomial_value(m, b);
            if w != 0.0 {
                for (s, x) in v.iter_mut().zip(c) {
                    *s += w * x;
                }
            }
        }
        Ok(GridFunction::new(self.grid.clone(), v, self.origin_exponent))
    }

    /// Every key satisfies Σ j·m_j = p₃.
    pub fn check_homogeneity(&self) -> Result<()> {
        for m in self.terms.keys() {
            if weighted_degree(m) != self.degree.2 {
                return Err(LabError::Construction(format!(
                    "multi-index {m:?} has weighted degree {} but the expansion declares {}",
                    weighted_degree(m),
                    self.degree.2
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_grid;

    #[test]
    fn product_and_partial() {
        let g = make_grid(8, 1e-2, 1e2, 128).unwrap();
        let one = vec![1.0; g.len()];
        let a = MonomialExpansion::linear(&g, 2, 1, &one);
        let b = MonomialExpansion::linear(&g, 2, 2, &one);
        let p = a.mul(&a).mul(&b);
        assert_eq!(p.degree.2, 4);
        p.check_homogeneity().unwrap();
        let v = p.evaluate(&[3.0, 2.0]).unwrap();
        assert!((v.values()[5] - 18.0).abs() < 1e-12);
        let d1 = p.partial(1).evaluate(&[3.0, 2.0]).unwrap();
        assert!((d1.values()[0] - 12.0).abs() < 1e-12);
        assert!(p.partial(2).partial(2).is_empty());
    }
}
