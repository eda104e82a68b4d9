//! Uniform 1-D mesh, node-based fields and the discrete calculus shared by
//! every other module.
//!
//! The truncated interval `[x_min, x_max]` stands in for the real line. All
//! fields live on the `n` nodes `x_i = x_min + i dx`. Quadrature is the
//! trapezoid rule, so the two boundary nodes carry half weight.
//!
//! Two operators make up the calculus:
//!
//! * [`gradient`]: centered second-order differences in the interior and
//!   one-sided second-order stencils at the two ends. It is exact on
//!   quadratics.
//! * [`divergence_flux`]: the finite-volume divergence of a node flux. Face
//!   fluxes are the average of the adjacent node values, and the flux through
//!   the two outer faces is zero. It telescopes, so the trapezoid integral of
//!   any divergence is zero up to round-off, and it is the negative adjoint of
//!   [`gradient`] whenever the flux vanishes at both boundary nodes.

use crate::error::{invalid, Error, Result};

/// Lower clamp applied wherever a logarithm or a ratio of densities is formed.
pub const DENSITY_FLOOR: f64 = 1e-30;

/// Boundary-to-peak ratio a density must respect to count as tail-contained.
pub const TAIL_RATIO: f64 = 1e-8;

/// Smallest admissible node count.
pub const MIN_NODES: usize = 8;

pub mod tol {
    /// Unit mass after [`super::normalize`].
    pub const NORMALIZED_MASS: f64 = 1e-12;
    /// Trapezoid integral of a divergence.
    pub const DIVERGENCE_MASS: f64 = 1e-12;
    /// Discrete integration by parts with fluxes vanishing at the boundary.
    pub const INTEGRATION_BY_PARTS: f64 = 1e-10;
}

/// Uniform mesh on a bounded interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n: usize,
    dx: f64,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() {
            return Err(invalid(format!("grid bounds must be finite, got [{x_min}, {x_max}]")));
        }
        if x_min >= x_max {
            return Err(invalid(format!("grid needs x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if n < MIN_NODES {
            return Err(invalid(format!("grid needs at least {MIN_NODES} nodes, got {n}")));
        }
        let dx = (x_max - x_min) / (n - 1) as f64;
        Ok(Self { x_min, x_max, n, dx })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Position of node `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    /// Midpoint between nodes `i` and `i + 1`.
    pub fn face(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Trapezoid weights; they sum to `x_max - x_min`.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![self.dx; self.n];
        w[0] = 0.5 * self.dx;
        w[self.n - 1] = 0.5 * self.dx;
        w
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|i| f(self.x(i))).collect()
    }

    pub(crate) fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.n {
            return Err(invalid(format!("{what} has {len} values, grid has {} nodes", self.n)));
        }
        Ok(())
    }

    pub(crate) fn check_same(&self, other: &Grid1D) -> Result<()> {
        if self != other {
            return Err(invalid(format!("grid mismatch: {self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Nonnegative, unit-mass density sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl DensityField {
    /// Wraps values that are already normalized. Mass is checked to `1e-9`.
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len(), "density")?;
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::DegenerateDensity(format!("density value {v} is negative or not finite")));
        }
        let mass = integrate_values(&grid, &values);
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::DegenerateDensity(format!("density has mass {mass}, expected 1")));
        }
        Ok(Self { grid, values })
    }

    /// Samples an unnormalized profile and rescales it to unit mass.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        normalize(&grid.sample(f), &grid)
    }

    pub(crate) fn from_parts_unchecked(grid: Grid1D, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        integrate_values(&self.grid, &self.values)
    }

    /// `log(max(rho, DENSITY_FLOOR))` per node.
    pub fn log_values(&self) -> Vec<f64> {
        self.values.iter().map(|&v| floored_ln(v)).collect()
    }

    /// Node masses `w_i rho_i` under the trapezoid weights.
    pub fn masses(&self) -> Vec<f64> {
        self.grid.weights().iter().zip(&self.values).map(|(w, v)| w * v).collect()
    }

    /// Whether both boundary values are below `TAIL_RATIO` times the peak.
    pub fn tail_contained(&self) -> bool {
        let peak = self.values.iter().cloned().fold(0.0, f64::max);
        let n = self.values.len();
        self.values[0] <= TAIL_RATIO * peak && self.values[n - 1] <= TAIL_RATIO * peak
    }

    pub fn mean(&self) -> f64 {
        let x = self.grid.nodes();
        let f: Vec<f64> = x.iter().zip(&self.values).map(|(x, r)| x * r).collect();
        integrate_values(&self.grid, &f)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let x = self.grid.nodes();
        let f: Vec<f64> = x.iter().zip(&self.values).map(|(x, r)| (x - m).powi(2) * r).collect();
        integrate_values(&self.grid, &f)
    }
}

/// Scalar field on a grid representing a velocity, drift or flux.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len(), "vector field")?;
        check_finite(&values, "vector field")?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.sample(f))
    }

    pub(crate) fn from_parts_unchecked(grid: Grid1D, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Time-indexed densities with a uniform step.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFlow {
    grid: Grid1D,
    t0: f64,
    dt: f64,
    frames: Vec<DensityField>,
}

impl DensityFlow {
    pub fn new(grid: Grid1D, t0: f64, dt: f64, frames: Vec<DensityField>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("flow time step must be positive, got {dt}")));
        }
        if frames.len() < 2 {
            return Err(invalid(format!("flow needs at least 2 frames, got {}", frames.len())));
        }
        for f in &frames {
            grid.check_same(f.grid())?;
        }
        Ok(Self { grid, t0, dt, frames })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t1(&self) -> f64 {
        self.time(self.frames.len() - 1)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[DensityField] {
        &self.frames
    }

    pub fn frame(&self, k: usize) -> &DensityField {
        &self.frames[k]
    }

    pub fn first(&self) -> &DensityField {
        &self.frames[0]
    }

    pub fn last(&self) -> &DensityField {
        &self.frames[self.frames.len() - 1]
    }
}

pub(crate) fn floored_ln(v: f64) -> f64 {
    v.max(DENSITY_FLOOR).ln()
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(invalid(format!("{what} is not finite at node {i}"))),
        None => Ok(()),
    }
}

/// Second-order gradient of a node field.
pub fn gradient(f: &[f64], grid: &Grid1D) -> Result<VectorField> {
    grid.check_len(f.len(), "field")?;
    check_finite(f, "field")?;
    Ok(VectorField::from_parts_unchecked(*grid, gradient_values(grid, f)))
}

pub(crate) fn gradient_values(grid: &Grid1D, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let h2 = 2.0 * grid.dx();
    let mut g = vec![0.0; n];
    g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / h2;
    for i in 1..n - 1 {
        g[i] = (f[i + 1] - f[i - 1]) / h2;
    }
    g[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / h2;
    g
}

/// Finite-volume divergence of a node flux with zero flux through the ends.
pub fn divergence_flux(flux: &VectorField) -> Vec<f64> {
    divergence_values(flux.grid(), flux.values())
}

pub(crate) fn divergence_values(grid: &Grid1D, j: &[f64]) -> Vec<f64> {
    let n = j.len();
    let dx = grid.dx();
    let mut d = vec![0.0; n];
    // face i sits between nodes i and i + 1
    let face = |i: usize| 0.5 * (j[i] + j[i + 1]);
    d[0] = face(0) / (0.5 * dx);
    for i in 1..n - 1 {
        d[i] = (face(i) - face(i - 1)) / dx;
    }
    d[n - 1] = -face(n - 2) / (0.5 * dx);
    d
}

/// Trapezoid rule.
pub fn integrate(f: &[f64], grid: &Grid1D) -> Result<f64> {
    grid.check_len(f.len(), "integrand")?;
    check_finite(f, "integrand")?;
    Ok(integrate_values(grid, f))
}

pub(crate) fn integrate_values(grid: &Grid1D, f: &[f64]) -> f64 {
    let n = f.len();
    let interior: f64 = f[1..n - 1].iter().sum();
    grid.dx() * (interior + 0.5 * (f[0] + f[n - 1]))
}

/// Rescales a nonnegative profile to unit trapezoid mass.
pub fn normalize(f: &[f64], grid: &Grid1D) -> Result<DensityField> {
    grid.check_len(f.len(), "profile")?;
    if let Some(v) = f.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::DegenerateDensity(format!("profile value {v} is negative or not finite")));
    }
    let mass = integrate_values(grid, f);
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::DegenerateDensity(format!("profile has mass {mass}")));
    }
    Ok(DensityField::from_parts_unchecked(*grid, f.iter().map(|v| v / mass).collect()))
}
