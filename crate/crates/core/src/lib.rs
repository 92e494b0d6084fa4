//! Numerical laboratory for type-II blowup in corotational harmonic map heat flow
//! above the critical dimension.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod linop;
pub mod modes;
pub mod numerics;
pub mod profile;
pub mod qb;
pub mod sim;

pub use error::{LabError, Result};
