//! Numerical laboratory for flows of probability densities on the line.

pub mod bridge;
pub mod densities;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod kinematics;
pub mod product_flow;
pub mod transport;
mod tridiag;

pub use error::{Error, Result};
pub use grid::{DensityField, DensityFlow, Grid1D, VectorField};
