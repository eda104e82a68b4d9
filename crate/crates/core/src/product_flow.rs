//! Relative entropy as a functional of a pair of densities.
//!
//! On the product of two Wasserstein spaces the gradient of
//! `D(ρ̃ ‖ ρ) = ∫ ρ̃ log(ρ̃/ρ)` has components
//!
//! ```text
//! g₁ = ∇log(ρ̃/ρ),    g₂ = −∇(ρ̃/ρ) = −(ρ̃/ρ) g₁
//! ```
//!
//! and steepest descent moves both densities with opposite fluxes,
//! `∂ρ̃/∂t = ∇·J`, `∂ρ/∂t = −∇·J` with `J = g₁ ρ̃`. Along that flow
//!
//! ```text
//! dD/dt = −∫ (1 + ρ̃/ρ) |∇log(ρ̃/ρ)|² ρ̃,
//! ```
//!
//! which dominates the decay `−(σ²/2) ∫ |∇log(ρ̃/ρ)|² ρ̃` of two solutions of a
//! common Fokker-Planck equation whenever `σ²/2 ≤ 1`.

use crate::error::{invalid, Error, Result};
use crate::functionals::{log_ratio_gradient_values, relative_entropy_values, relative_fisher};
use crate::grid::{divergence_values, integrate_values, DensityField, DensityFlow, Grid1D, VectorField, DENSITY_FLOOR};

pub mod tol {
    /// `max|J₁ + J₂|` relative to `max|J₁|`.
    pub const OPPOSITE_FLUX: f64 = 1e-12;
    /// Per-node `|Δρ̃ + Δρ|` over one step.
    pub const OPPOSITE_RATE: f64 = 1e-12;
    /// Drift of `ρ̃ + ρ` over a long run.
    pub const SUM_DRIFT: f64 = 1e-10;
    /// Mass change over one step.
    pub const MASS: f64 = 1e-12;
    /// `g₂ + (ρ̃/ρ) g₁`, per node.
    pub const CHAIN_RULE: f64 = 1e-10;
    /// Regrouped forms of the product-flow entropy rate.
    pub const REGROUPING: f64 = 1e-12;
    /// Relative mismatch between predicted and measured rates.
    pub const RATE_RELATIVE: f64 = 0.01;
    /// Absolute floor for rate comparisons.
    pub const RATE_ABSOLUTE: f64 = 1e-6;
    /// Rate comparisons stop once `D` falls below this.
    pub const RATE_MIN_ENTROPY: f64 = 1e-5;
    /// `‖g₁‖∞` below which strict decrease is no longer required.
    pub const LYAPUNOV_GRADIENT: f64 = 1e-8;
    /// Node values below this after a step count as a positivity failure.
    pub const NEGATIVITY: f64 = -1e-12;
    /// Largest step-to-step increase of `D` tolerated along the flow.
    pub const MONOTONE: f64 = 1e-12;
    /// Number of step halvings attempted before giving up.
    pub const MAX_HALVINGS: u32 = 10;
}

/// A pair `(ρ̃, ρ)` on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    pub rho_tilde: DensityField,
    pub rho: DensityField,
}

impl PairState {
    pub fn new(rho_tilde: DensityField, rho: DensityField) -> Result<Self> {
        rho_tilde.grid().check_same(rho.grid())?;
        Ok(Self { rho_tilde, rho })
    }

    pub fn grid(&self) -> &Grid1D {
        self.rho.grid()
    }

    /// `ρ̃/ρ` with the reference density floored.
    pub fn ratio(&self) -> Vec<f64> {
        self.rho_tilde.values().iter().zip(self.rho.values()).map(|(a, b)| a / b.max(DENSITY_FLOOR)).collect()
    }

    pub fn relative_entropy(&self) -> f64 {
        relative_entropy_values(self.grid(), self.rho_tilde.values(), self.rho.values())
    }
}

/// Both components of the product-space gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductGradient {
    pub g1: VectorField,
    pub g2: VectorField,
}

pub fn product_gradient(s: &PairState) -> ProductGradient {
    let grid = *s.grid();
    let g1 = log_ratio_gradient_values(&grid, s.rho_tilde.values(), s.rho.values());
    let g2 = g1.iter().zip(s.ratio()).map(|(g, r)| -r * g).collect();
    ProductGradient {
        g1: VectorField::from_parts_unchecked(grid, g1),
        g2: VectorField::from_parts_unchecked(grid, g2),
    }
}

/// The opposite fluxes `(J₁, J₂)` with `J₁ = g₁ ρ̃` and `J₂ = −J₁`.
pub fn fluxes(s: &PairState) -> (VectorField, VectorField) {
    let grid = *s.grid();
    let j = flux_values(s);
    let minus = j.iter().map(|v| -v).collect();
    (VectorField::from_parts_unchecked(grid, j), VectorField::from_parts_unchecked(grid, minus))
}

fn flux_values(s: &PairState) -> Vec<f64> {
    let g1 = log_ratio_gradient_values(s.grid(), s.rho_tilde.values(), s.rho.values());
    g1.iter().zip(s.rho_tilde.values()).map(|(g, r)| g * r).collect()
}

/// Time derivatives `(∂ρ̃/∂t, ∂ρ/∂t)` of the steepest-descent flow.
pub fn product_rates(s: &PairState) -> (Vec<f64>, Vec<f64>) {
    let div = divergence_values(s.grid(), &flux_values(s));
    let minus = div.iter().map(|v| -v).collect();
    (div, minus)
}

/// Largest explicit step `0.25 dx² min(ρ/ρ̃)` over nodes where `ρ̃` is resolved.
pub fn stable_dt(s: &PairState) -> f64 {
    let min_ratio = s
        .rho_tilde
        .values()
        .iter()
        .zip(s.rho.values())
        .filter(|(a, _)| **a > DENSITY_FLOOR)
        .map(|(a, b)| b / a)
        .fold(f64::INFINITY, f64::min);
    0.25 * s.grid().dx().powi(2) * min_ratio
}

fn try_step(s: &PairState, dt: f64) -> Option<PairState> {
    let (dt_tilde, _) = product_rates(s);
    let mut tilde = s.rho_tilde.values().to_vec();
    let mut rho = s.rho.values().to_vec();
    for ((a, b), d) in tilde.iter_mut().zip(rho.iter_mut()).zip(&dt_tilde) {
        *a += dt * d;
        *b -= dt * d;
    }
    for v in tilde.iter_mut().chain(rho.iter_mut()) {
        if *v < tol::NEGATIVITY || !v.is_finite() {
            return None;
        }
        *v = v.max(0.0);
    }
    let grid = *s.grid();
    Some(PairState {
        rho_tilde: DensityField::from_parts_unchecked(grid, tilde),
        rho: DensityField::from_parts_unchecked(grid, rho),
    })
}

/// Advances the pair by exactly `dt`.
///
/// A step that loses positivity is retried as two half steps, recursively, at
/// most [`tol::MAX_HALVINGS`] times.
pub fn product_flow_step(s: &PairState, dt: f64) -> Result<PairState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let bound = stable_dt(s);
    if dt > bound * (1.0 + 1e-12) {
        return Err(invalid(format!("time step {dt} exceeds the stability bound {bound}")));
    }
    advance(s, dt, 0)
}

fn advance(s: &PairState, dt: f64, depth: u32) -> Result<PairState> {
    if let Some(next) = try_step(s, dt) {
        return Ok(next);
    }
    if depth == tol::MAX_HALVINGS {
        return Err(Error::SchemeFailure(format!(
            "positivity lost after {} halvings of the product-flow step; try a smaller dt",
            tol::MAX_HALVINGS
        )));
    }
    let half = advance(s, 0.5 * dt, depth + 1)?;
    advance(&half, 0.5 * dt, depth + 1)
}

/// A stored product-flow trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTrajectory {
    pub rho_tilde: DensityFlow,
    pub rho: DensityFlow,
}

impl ProductTrajectory {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn state(&self, k: usize) -> PairState {
        PairState { rho_tilde: self.rho_tilde.frame(k).clone(), rho: self.rho.frame(k).clone() }
    }
}

/// Runs `steps` steps of size `dt`, keeping every `stride`-th state.
pub fn product_flow(s: &PairState, dt: f64, steps: usize, stride: usize) -> Result<ProductTrajectory> {
    if stride == 0 || steps == 0 || steps % stride != 0 {
        return Err(invalid(format!("stride {stride} must divide the positive step count {steps}")));
    }
    let mut state = s.clone();
    let mut tilde = vec![state.rho_tilde.clone()];
    let mut rho = vec![state.rho.clone()];
    for k in 1..=steps {
        state = product_flow_step(&state, dt)?;
        if k % stride == 0 {
            tilde.push(state.rho_tilde.clone());
            rho.push(state.rho.clone());
        }
    }
    let grid = *s.grid();
    let frame_dt = dt * stride as f64;
    Ok(ProductTrajectory { rho_tilde: DensityFlow::new(grid, 0.0, frame_dt, tilde)?, rho: DensityFlow::new(grid, 0.0, frame_dt, rho)? })
}

/// Entropy rate `∫ ∇log(ρ̃/ρ)·(ṽ − v) ρ̃` along any pair of continuity flows.
pub fn pt2006_rate(s: &PairState, v_tilde: &VectorField, v: &VectorField) -> Result<f64> {
    s.grid().check_same(v_tilde.grid())?;
    s.grid().check_same(v.grid())?;
    let g1 = log_ratio_gradient_values(s.grid(), s.rho_tilde.values(), s.rho.values());
    let f: Vec<f64> = g1
        .iter()
        .zip(v_tilde.values().iter().zip(v.values()))
        .zip(s.rho_tilde.values())
        .map(|((g, (a, b)), r)| g * (a - b) * r)
        .collect();
    Ok(integrate_values(s.grid(), &f))
}

/// Entropy rate `−∫ (1 + ρ̃/ρ) |g₁|² ρ̃` along the steepest-descent flow.
pub fn reff_rate(s: &PairState) -> f64 {
    let g1 = log_ratio_gradient_values(s.grid(), s.rho_tilde.values(), s.rho.values());
    let f: Vec<f64> = g1
        .iter()
        .zip(s.ratio())
        .zip(s.rho_tilde.values())
        .map(|((g, r), a)| -(1.0 + r) * g * g * a)
        .collect();
    integrate_values(s.grid(), &f)
}

/// The cross term `∫ (ρ̃/ρ) |g₁|² ρ̃`, so that `reff = −fisher − cross`.
pub fn reff_cross_term(s: &PairState) -> f64 {
    let g1 = log_ratio_gradient_values(s.grid(), s.rho_tilde.values(), s.rho.values());
    let f: Vec<f64> = g1.iter().zip(s.ratio()).zip(s.rho_tilde.values()).map(|((g, r), a)| r * g * g * a).collect();
    integrate_values(s.grid(), &f)
}

/// `(reff_rate, −(σ²/2) relative_fisher)`.
pub fn rate_comparison(s: &PairState, sigma2: f64) -> Result<(f64, f64)> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(invalid(format!("σ² must be positive, got {sigma2}")));
    }
    let fisher = relative_fisher(&s.rho_tilde, &s.rho)?;
    Ok((reff_rate(s), -0.5 * sigma2 * fisher))
}
