//! Named density families used by tests, examples and scenario configs.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::grid::{DensityField, Grid1D};

/// Gaussian pdf with the given mean and variance.
pub fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Normal density `N(mean, var)` sampled on `grid` and renormalized.
pub fn gaussian(grid: &Grid1D, mean: f64, var: f64) -> Result<DensityField> {
    if !(var > 0.0) || !var.is_finite() || !mean.is_finite() {
        return Err(invalid(format!("gaussian needs finite mean and positive variance, got ({mean}, {var})")));
    }
    DensityField::from_fn(*grid, |x| gaussian_pdf(x, mean, var))
}

/// One weighted Gaussian component of a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

pub fn mixture(grid: &Grid1D, components: &[Component]) -> Result<DensityField> {
    if components.is_empty() {
        return Err(invalid("mixture needs at least one component"));
    }
    for c in components {
        if !(c.weight > 0.0) || !(c.var > 0.0) {
            return Err(invalid(format!("mixture component {c:?} needs positive weight and variance")));
        }
    }
    DensityField::from_fn(*grid, |x| {
        components.iter().map(|c| c.weight * gaussian_pdf(x, c.mean, c.var)).sum()
    })
}

/// Indicator of `[a, b]`, renormalized.
pub fn uniform(grid: &Grid1D, a: f64, b: f64) -> Result<DensityField> {
    if !(a < b) {
        return Err(invalid(format!("uniform needs a < b, got [{a}, {b}]")));
    }
    let eps = 1e-12 * grid.dx();
    DensityField::from_fn(*grid, |x| if x >= a - eps && x <= b + eps { 1.0 } else { 0.0 })
}
