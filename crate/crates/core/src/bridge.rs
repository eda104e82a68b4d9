//! Controlled diffusions and Schrödinger bridges over a prior.
//!
//! A feedback control `u` changes the prior drift to `b₊ + u` while keeping
//! the noise. Along a controlled marginal `ρᵘ` and the prior marginal `ρ`
//!
//! ```text
//! d/dt D(ρᵘ ‖ ρ) = ∫ ∇log(ρᵘ/ρ)·(u − (σ²/2) ∇log(ρᵘ/ρ)) ρᵘ,
//! ```
//!
//! which for `u = 0` is the familiar decay `−(σ²/2) × relative Fisher`.
//!
//! When only the final marginal is prescribed the optimal control is
//! `u* = σ² ∇log φ` with `φ` space-time harmonic and `φ(t₁) = ρ₁/ρ(t₁)`, and the
//! controlled marginal factorizes as `ρᵠ = ρ φ`. Its relative entropy to the
//! prior grows towards `D(ρ₁ ‖ ρ(t₁))` at rate `(σ²/2) ∫ |∇log φ|² ρᵠ`.
//!
//! With both marginals prescribed the bridge is found from the Schrödinger
//! system by alternating scalings of the discrete prior kernel.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{invalid, Error, Result};
use crate::functionals::{log_ratio_gradient_values, relative_entropy_values};
use crate::grid::{gradient_values, integrate_values, DensityField, DensityFlow, Grid1D, VectorField, DENSITY_FLOOR};
use crate::kinematics::{
    fp_solve, harmonic_solve, log_field, step_count, ControlField, DiffusionSpec, DriftField, Propagator,
    SampledField,
};

pub mod tol {
    /// Per-frame decrease tolerated in a relative entropy that must not shrink.
    pub const MONOTONE: f64 = 1e-10;
    /// `D(ρᵠ(t₁) ‖ ρ(t₁))` against `D(ρ₁ ‖ ρ(t₁))`.
    pub const TERMINAL_ENTROPY: f64 = 1e-4;
    /// Terminal controlled frame against the target, per node.
    pub const TERMINAL_DENSITY: f64 = 1e-6;
    /// `|ρᵠ − ρ φ|`, per node.
    pub const FACTORIZATION: f64 = 1e-6;
    /// Drift of `∫ φ ρ` in `t`.
    pub const MARTINGALE: f64 = 1e-6;
    /// Re-solving the controlled equation against the factorized flow, per node.
    pub const RECONSTRUCTION: f64 = 1e-3;
    /// Relative mismatch between predicted and measured entropy rates.
    pub const RATE_RELATIVE: f64 = 0.01;
    /// Rate comparisons skip frames whose relative entropy is below this.
    pub const RATE_MIN_ENTROPY: f64 = 1e-4;
    /// Target-to-prior ratio above which a target is rejected.
    pub const MAX_RATIO: f64 = 1e12;
    /// Target values below this never make a target infeasible.
    pub const NEGLIGIBLE_TARGET: f64 = 1e-10;
    /// Row sums of a prior kernel.
    pub const KERNEL_STOCHASTIC: f64 = 1e-10;
    /// Default stopping tolerance on Fortet marginal L1 errors.
    pub const FORTET: f64 = 1e-8;
    pub const FORTET_MAX_ITER: usize = 100_000;
    /// Iterations between recorded Fortet residuals.
    pub const FORTET_CHECK_EVERY: usize = 100;
    /// L1 mismatch between entropic interpolation endpoints and the marginals.
    pub const ENDPOINT: f64 = 2e-8;
    /// Unit mass of entropic interpolation frames.
    pub const INTERPOLATION_MASS: f64 = 1e-6;
    /// Backward drifts of the bridge and of the prior, on the bulk.
    pub const SHARED_BACKWARD_DRIFT: f64 = 1e-3;
}

/// Fokker-Planck flow of the prior with drift `b₊ + u`.
pub fn controlled_fp_solve(
    spec: &DiffusionSpec,
    u: &ControlField,
    rho0: &DensityField,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<DensityFlow> {
    fp_solve(&spec.with_control(u), rho0, t0, t1, dt)
}

/// `d/dt D(ρᵘ ‖ ρ)` for a controlled marginal against the prior marginal.
pub fn ptcontr_rate(rho_u: &DensityField, rho: &DensityField, u: &VectorField, sigma2: f64) -> Result<f64> {
    let grid = rho.grid();
    grid.check_same(rho_u.grid())?;
    grid.check_same(u.grid())?;
    let g = log_ratio_gradient_values(grid, rho_u.values(), rho.values());
    let half = 0.5 * sigma2;
    let f: Vec<f64> = g
        .iter()
        .zip(u.values())
        .zip(rho_u.values())
        .map(|((g, u), r)| g * (u - half * g) * r)
        .collect();
    Ok(integrate_values(grid, &f))
}

/// `−(σ²/2) ∫ |∇log(ρ̃/ρ)|² ρ̃`: decay of relative entropy between two
/// solutions of one Fokker-Planck equation.
pub fn same_fp_decay_rate(rho_tilde: &DensityField, rho: &DensityField, sigma2: f64) -> Result<f64> {
    ptcontr_rate(rho_tilde, rho, &VectorField::zeros(*rho.grid()), sigma2)
}

/// A half bridge: harmonic factor, controlled flow and optimal control.
#[derive(Debug, Clone)]
pub struct BridgeSolution {
    /// Space-time harmonic factor, one node field per frame.
    pub phi: Vec<Vec<f64>>,
    pub controlled_flow: DensityFlow,
    pub control: ControlField,
    pub prior_flow: DensityFlow,
}

impl BridgeSolution {
    /// Node values of the control at frame `k`.
    pub fn control_at(&self, k: usize) -> VectorField {
        self.control.vector_field(self.prior_flow.grid(), self.prior_flow.time(k))
    }

    /// `D(ρᵠ_t ‖ ρ_t)` per frame.
    pub fn relative_entropy_series(&self) -> Vec<f64> {
        let g = self.prior_flow.grid();
        (0..self.prior_flow.len())
            .map(|k| {
                relative_entropy_values(g, self.controlled_flow.frame(k).values(), self.prior_flow.frame(k).values())
            })
            .collect()
    }

    /// `max_t |∫ φ_t ρ_t − ∫ φ_0 ρ_0|`.
    pub fn martingale_drift(&self) -> f64 {
        let g = self.prior_flow.grid();
        let pairing = |k: usize| {
            let f: Vec<f64> = self.phi[k].iter().zip(self.prior_flow.frame(k).values()).map(|(p, r)| p * r).collect();
            integrate_values(g, &f)
        };
        let start = pairing(0);
        (0..self.phi.len()).map(|k| (pairing(k) - start).abs()).fold(0.0, f64::max)
    }
}

/// Only the initial marginal is changed: the optimal control vanishes.
pub fn half_bridge_initial(
    spec: &DiffusionSpec,
    prior_flow: &DensityFlow,
    rho0_new: &DensityField,
) -> Result<BridgeSolution> {
    prior_flow.grid().check_same(rho0_new.grid())?;
    let controlled = fp_solve(spec, rho0_new, prior_flow.t0(), prior_flow.t1(), prior_flow.dt())?;
    let n = prior_flow.grid().len();
    Ok(BridgeSolution {
        phi: vec![vec![1.0; n]; prior_flow.len()],
        controlled_flow: controlled,
        control: ControlField::zero(),
        prior_flow: prior_flow.clone(),
    })
}

/// Only the final marginal is prescribed: `φ(t₁) = ρ₁/ρ(t₁)`.
///
/// `prior_flow` must hold every step of [`fp_solve`] for `spec`, so that the
/// harmonic factor is marched with the transpose of the same steps.
pub fn half_bridge_final(
    spec: &DiffusionSpec,
    prior_flow: &DensityFlow,
    rho1_target: &DensityField,
) -> Result<BridgeSolution> {
    prior_flow.grid().check_same(rho1_target.grid())?;
    let end = prior_flow.last().values();
    let mut phi1 = Vec::with_capacity(end.len());
    for (i, (&target, &prior)) in rho1_target.values().iter().zip(end).enumerate() {
        let ratio = target / prior.max(DENSITY_FLOOR);
        if ratio > tol::MAX_RATIO && target > tol::NEGLIGIBLE_TARGET {
            return Err(Error::InfeasibleTarget(format!(
                "target density {target:e} at x = {} where the prior has {prior:e}",
                prior_flow.grid().x(i)
            )));
        }
        phi1.push(ratio.max(DENSITY_FLOOR));
    }
    bridge_from_terminal_factor(spec, prior_flow, &phi1)
}

/// Half bridge for an unnormalized terminal factor `φ₁ > 0`.
///
/// Frames are `ρ φ / ∫ φ₁ ρ(t₁)`, so rescaling `φ₁` changes nothing.
pub fn bridge_from_terminal_factor(
    spec: &DiffusionSpec,
    prior_flow: &DensityFlow,
    phi1: &[f64],
) -> Result<BridgeSolution> {
    let grid = *prior_flow.grid();
    let harmonic = harmonic_solve(spec, &grid, phi1, prior_flow.t0(), prior_flow.t1(), prior_flow.dt())?;
    let scale = {
        let f: Vec<f64> = phi1.iter().zip(prior_flow.last().values()).map(|(p, r)| p * r).collect();
        integrate_values(&grid, &f)
    };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::DegenerateDensity(format!("terminal factor has pairing {scale} with the prior")));
    }
    let phi: Vec<Vec<f64>> =
        harmonic.frames.into_iter().map(|f| f.into_iter().map(|p| p / scale).collect()).collect();
    let frames = phi
        .iter()
        .zip(prior_flow.frames())
        .map(|(p, r)| DensityField::from_parts_unchecked(grid, p.iter().zip(r.values()).map(|(p, r)| p * r).collect()))
        .collect();
    let controlled_flow = DensityFlow::new(grid, prior_flow.t0(), prior_flow.dt(), frames)?;
    let control = optimal_control(&grid, spec.sigma2(), prior_flow.t0(), prior_flow.dt(), &phi);
    Ok(BridgeSolution { phi, controlled_flow, control, prior_flow: prior_flow.clone() })
}

/// `σ² ∇log φ` on nodes and faces for every frame.
fn optimal_control(grid: &Grid1D, sigma2: f64, t0: f64, dt: f64, phi: &[Vec<f64>]) -> ControlField {
    let mut nodes = Vec::with_capacity(phi.len());
    let mut faces = Vec::with_capacity(phi.len());
    for frame in phi {
        let logs = log_field(frame);
        nodes.push(gradient_values(grid, &logs).into_iter().map(|g| sigma2 * g).collect());
        faces.push(logs.windows(2).map(|w| sigma2 * (w[1] - w[0]) / grid.dx()).collect());
    }
    ControlField(DriftField::Sampled(Arc::new(SampledField { grid: *grid, t0, dt, nodes, faces })))
}

/// `(σ²/2) ∫ |∇log φ|² ρᵠ` at frame `k` of a half bridge.
pub fn bridge_entropy_rate(sol: &BridgeSolution, k: usize, sigma2: f64) -> Result<f64> {
    let phi = sol
        .phi
        .get(k)
        .ok_or_else(|| invalid(format!("frame {k} out of range for {} frames", sol.phi.len())))?;
    let grid = sol.prior_flow.grid();
    let g = gradient_values(grid, &log_field(phi));
    let f: Vec<f64> =
        g.iter().zip(sol.controlled_flow.frame(k).values()).map(|(g, r)| 0.5 * sigma2 * g * g * r).collect();
    Ok(integrate_values(grid, &f))
}

/// Transition matrix of the discretized prior between two times.
///
/// Entry `(i, j)` is the mass found at node `j` at `t1` when a unit mass
/// starts at node `i` at `t0`; rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorKernel {
    pub grid: Grid1D,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub matrix: Array2<f64>,
}

impl PriorKernel {
    /// Wraps an arbitrary nonnegative square matrix.
    pub fn from_matrix(grid: Grid1D, t0: f64, t1: f64, dt: f64, matrix: Array2<f64>) -> Result<Self> {
        let n = grid.len();
        if matrix.dim() != (n, n) {
            return Err(invalid(format!("kernel is {:?}, grid has {n} nodes", matrix.dim())));
        }
        if matrix.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("kernel entries must be finite and nonnegative"));
        }
        Ok(Self { grid, t0, t1, dt, matrix })
    }

    /// Largest deviation of a row sum from one.
    pub fn stochasticity_error(&self) -> f64 {
        self.matrix.rows().into_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }
}

pub fn prior_kernel(spec: &DiffusionSpec, grid: &Grid1D, t0: f64, t1: f64, dt: f64) -> Result<PriorKernel> {
    let steps = step_count(t0, t1, dt)?;
    let prop = Propagator::new(spec, grid, dt)?;
    let n = grid.len();
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();
    for k in 0..steps {
        let op = prop.operator(t0 + k as f64 * dt)?;
        for row in &mut rows {
            op.apply(row);
        }
    }
    let matrix = Array2::from_shape_fn((n, n), |(i, j)| rows[i][j].max(0.0));
    Ok(PriorKernel { grid: *grid, t0, t1, dt, matrix })
}

/// Solution of the Schrödinger system `p₀ = φ̂₀ (K φ₁)`, `p₁ = φ₁ (Kᵀ φ̂₀)`.
#[derive(Debug, Clone)]
pub struct SchroedingerSystem {
    pub phi0_hat: Vec<f64>,
    pub phi1: Vec<f64>,
    pub kernel: PriorKernel,
    pub iterations: usize,
    /// Row-marginal L1 error after every [`tol::FORTET_CHECK_EVERY`] sweeps.
    pub residual_history: Vec<f64>,
}

impl SchroedingerSystem {
    /// Node-mass coupling `φ̂₀ᵢ Kᵢⱼ φ₁ⱼ`.
    pub fn coupling(&self) -> Array2<f64> {
        Array2::from_shape_fn(self.kernel.matrix.dim(), |(i, j)| {
            self.phi0_hat[i] * self.kernel.matrix[[i, j]] * self.phi1[j]
        })
    }

    /// L1 errors of the coupling marginals against `(p0, p1)`.
    pub fn marginal_errors(&self, p0: &[f64], p1: &[f64]) -> (f64, f64) {
        let pi = self.coupling();
        let rows = pi.rows().into_iter().zip(p0).map(|(r, p)| (r.sum() - p).abs()).sum();
        let cols = pi.columns().into_iter().zip(p1).map(|(c, p)| (c.sum() - p).abs()).sum();
        (rows, cols)
    }
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn check_masses(p: &[f64], n: usize, what: &str) -> Result<()> {
    if p.len() != n {
        return Err(invalid(format!("{what} has {} entries, kernel has {n} nodes", p.len())));
    }
    if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(invalid(format!("{what} must be finite and nonnegative")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("{what} sums to {total}, expected 1")));
    }
    Ok(())
}

/// Fortet iteration (iterative proportional fitting) on node masses.
pub fn fortet_solve(kernel: &PriorKernel, p0: &[f64], p1: &[f64], tol: f64, max_iter: usize) -> Result<SchroedingerSystem> {
    let n = kernel.grid.len();
    check_masses(p0, n, "initial marginal")?;
    check_masses(p1, n, "final marginal")?;
    let k = &kernel.matrix;
    let mut phi0_hat = vec![0.0; n];
    let mut phi1 = vec![1.0; n];
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let k_phi1 = k.dot(&ndarray::ArrayView1::from(&phi1));
        for i in 0..n {
            phi0_hat[i] = safe_ratio(p0[i], k_phi1[i]);
        }
        let kt_phi0 = k.t().dot(&ndarray::ArrayView1::from(&phi0_hat));
        for j in 0..n {
            phi1[j] = safe_ratio(p1[j], kt_phi0[j]);
        }
        let k_phi1 = k.dot(&ndarray::ArrayView1::from(&phi1));
        residual = (0..n).map(|i| (phi0_hat[i] * k_phi1[i] - p0[i]).abs()).sum();
        if it % tol::FORTET_CHECK_EVERY == 0 {
            history.push(residual);
        }
        if residual <= tol {
            return Ok(SchroedingerSystem {
                phi0_hat,
                phi1,
                kernel: kernel.clone(),
                iterations: it,
                residual_history: history,
            });
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual })
}

/// Entropic interpolation `ρ*_t ∝ φ̂_t φ_t` between the two marginals.
///
/// `spec` and `dt` must be the ones the kernel was built with; `φ̂` is carried
/// forward by the scheme and `φ` backward by its transpose.
pub fn bridge_interpolation(system: &SchroedingerSystem, spec: &DiffusionSpec, dt: f64) -> Result<DensityFlow> {
    let kernel = &system.kernel;
    if (dt - kernel.dt).abs() > 1e-12 * kernel.dt {
        return Err(invalid(format!("time step {dt} differs from the kernel's {}", kernel.dt)));
    }
    let grid = kernel.grid;
    let steps = step_count(kernel.t0, kernel.t1, dt)?;
    let prop = Propagator::new(spec, &grid, dt)?;
    let mut forward = Vec::with_capacity(steps + 1);
    let mut m = system.phi0_hat.clone();
    forward.push(m.clone());
    for k in 0..steps {
        prop.operator(kernel.t0 + k as f64 * dt)?.apply(&mut m);
        forward.push(m.clone());
    }
    let mut backward = vec![Vec::new(); steps + 1];
    let mut phi = system.phi1.clone();
    backward[steps] = phi.clone();
    for k in (0..steps).rev() {
        prop.operator(kernel.t0 + k as f64 * dt)?.apply_adjoint(&mut phi);
        backward[k] = phi.clone();
    }
    let weights = grid.weights();
    let frames = forward
        .iter()
        .zip(&backward)
        .map(|(m, phi)| {
            let values = m.iter().zip(phi).zip(&weights).map(|((m, p), w)| (m * p / w).max(0.0)).collect();
            DensityField::from_parts_unchecked(grid, values)
        })
        .collect();
    DensityFlow::new(grid, kernel.t0, dt, frames)
}
