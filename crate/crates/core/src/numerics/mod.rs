//! Grids, quadrature, finite differences, fitting, ODE integration and small linear algebra.

pub mod cutoff;
pub mod dd;
pub mod fit;
pub mod function;
pub mod grid;
pub mod jet;
pub mod linalg;
pub mod ode;

pub use cutoff::{chi, chi_derivs};
pub use fit::{linear_fit, power_law_fit, LinearFit, PowerFit};
pub use function::{inner_product, GridFunction};
pub use grid::{make_grid, RadialGrid};
pub use ode::{Dopri5, OdeSolution};
