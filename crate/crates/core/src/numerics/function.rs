use std::sync::Arc;

use super::fit::power_law_fit;
use super::grid::RadialGrid;
use crate::error::{LabError, Result};

/// Sampled radial function with origin-parity and tail metadata.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    origin_exponent: Option<i32>,
    tail_exponent: Option<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>, origin_exponent: Option<i32>) -> Self {
        assert_eq!(grid.len(), values.len(), "value count must match grid size");
        Self { grid, values, origin_exponent, tail_exponent: None }
    }

    pub fn from_fn(grid: &Arc<RadialGrid>, origin: Option<i32>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&y| f(y)).collect();
        Self::new(grid.clone(), values, origin)
    }

    pub fn zeros(grid: &Arc<RadialGrid>, origin: Option<i32>) -> Self {
        Self::new(grid.clone(), vec![0.0; grid.len()], origin)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn origin_exponent(&self) -> Option<i32> {
        self.origin_exponent
    }
    pub fn tail_exponent(&self) -> Option<f64> {
        self.tail_exponent
    }
    pub fn with_origin(mut self, p: Option<i32>) -> Self {
        self.origin_exponent = p;
        self
    }
    pub fn with_tail(mut self, q: Option<f64>) -> Self {
        self.tail_exponent = q;
        self
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn y(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_grid(&self, other: &GridFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(LabError::Usage("grid functions live on different grids".into()))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect(), self.origin_exponent)
    }

    /// Pointwise f(y, v).
    pub fn map_with_y(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self.y().iter().zip(&self.values).map(|(&y, &v)| f(y, v)).collect();
        Self::new(self.grid.clone(), values, self.origin_exponent)
    }

    /// Pointwise f(i, y, v).
    pub fn map_with_y_index(&self, f: impl Fn(usize, f64, f64) -> f64) -> Self {
        let values = self.y().iter().zip(&self.values).enumerate().map(|(i, (&y, &v))| f(i, y, v)).collect();
        Self::new(self.grid.clone(), values, self.origin_exponent)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &GridFunction) -> Self {
        self.zip(other, |a, b| a + b, min_origin(self.origin_exponent, other.origin_exponent))
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        self.zip(other, |a, b| a - b, min_origin(self.origin_exponent, other.origin_exponent))
    }

    pub fn mul(&self, other: &GridFunction) -> Self {
        let p = match (self.origin_exponent, other.origin_exponent) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        self.zip(other, |a, b| a * b, p)
    }

    /// self + c·other in place.
    pub fn axpy(&mut self, c: f64, other: &GridFunction) {
        debug_assert!(self.same_grid(other));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        self.origin_exponent = min_origin(self.origin_exponent, other.origin_exponent);
    }

    fn zip(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64, p: Option<i32>) -> Self {
        assert!(self.same_grid(other), "grid mismatch");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::new(self.grid.clone(), values, p)
    }

    /// Λf = y ∂_y f.
    pub fn lambda(&self) -> Self {
        Self::new(self.grid.clone(), self.grid.dx_k(&self.values, 1, self.origin_exponent), self.origin_exponent)
    }

    /// D² f in x = ln y.
    pub fn dxx(&self) -> Self {
        Self::new(self.grid.clone(), self.grid.dx_k(&self.values, 2, self.origin_exponent), self.origin_exponent)
    }

    /// Derivative ∂_y^order f for order ∈ {1, 2}.
    pub fn differentiate(&self, order: usize) -> Self {
        let g = &self.grid;
        let d1 = g.dx_k(&self.values, 1, self.origin_exponent);
        let y = g.nodes();
        let p = self.origin_exponent.map(|p| p - order as i32);
        let values = match order {
            1 => d1.iter().zip(y).map(|(a, y)| a / y).collect(),
            2 => {
                let d2 = g.dx_k(&self.values, 2, self.origin_exponent);
                d2.iter().zip(&d1).zip(y).map(|((b, a), y)| (b - a) / (y * y)).collect()
            }
            _ => panic!("derivative order must be 1 or 2"),
        };
        Self::new(g.clone(), values, p)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Max |v_i| over nodes with y in [a, b].
    pub fn max_abs_on(&self, a: f64, b: f64) -> f64 {
        self.y()
            .iter()
            .zip(&self.values)
            .filter(|(y, _)| **y >= a && **y <= b)
            .fold(0.0_f64, |m, (_, v)| m.max(v.abs()))
    }

    /// ∫ f y^{d-1} dy on the grid.
    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values, self.origin_exponent.map(f64::from))
    }

    /// Least-squares power-law fit over the last decade, returning (amplitude, exponent).
    pub fn fit_tail(&self) -> Result<(f64, f64)> {
        let ymax = self.grid.y_max();
        power_law_fit(self.y(), &self.values, ymax / 10.0, ymax).map(|f| (f.amplitude, f.exponent))
    }

    /// Least-squares power-law fit over the first decade.
    pub fn fit_origin(&self) -> Result<(f64, f64)> {
        let ymin = self.grid.y_min();
        power_law_fit(self.y(), &self.values, ymin, ymin * 10.0).map(|f| (f.amplitude, f.exponent))
    }

    /// Multiplies by a zero mask outside [a, b].
    pub fn restrict(&self, a: f64, b: f64) -> Self {
        self.map_with_y(|y, v| if y >= a && y <= b { v } else { 0.0 })
    }
}

fn min_origin(a: Option<i32>, b: Option<i32>) -> Option<i32> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        _ => None,
    }
}

/// ⟨f, g⟩ = ∫ f g y^{d-1} dy.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.check_grid(g)?;
    let v: Vec<f64> = f.values().iter().zip(g.values()).map(|(a, b)| a * b).collect();
    let p = match (f.origin_exponent(), g.origin_exponent()) {
        (Some(a), Some(b)) => Some(f64::from(a + b)),
        _ => None,
    };
    Ok(f.grid().integrate(&v, p))
}
