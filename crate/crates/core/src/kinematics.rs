//! Density-level kinematics of diffusions with constant noise `σ²`.
//!
//! A prior is a forward drift `b₊(x, t)` plus a diffusion coefficient `σ²`.
//! Its marginals solve
//!
//! ```text
//! ∂ρ/∂t + ∇·(b₊ ρ) − (σ²/2) Δρ = 0
//! ```
//!
//! and, reading the same flow backward in time,
//! `∂ρ/∂t + ∇·(b₋ ρ) + (σ²/2) Δρ = 0` with `b₊ − b₋ = σ² ∇log ρ`.
//!
//! # Scheme
//!
//! Node masses `m_i = w_i ρ_i` are exchanged through the faces between nodes.
//! The face flux is the exponentially fitted (Scharfetter-Gummel /
//! Chang-Cooper) flux, split as
//!
//! ```text
//! F = upwind(b ρ) − D B(|Pe|) (ρ_{i+1} − ρ_i)/dx,   D = σ²/2,  Pe = b dx / D,
//! ```
//!
//! with `B(z) = z/(eᶻ − 1)`. The upwind part is explicit and the fitted
//! diffusion implicit. One step is therefore a nonnegative, mass-preserving
//! matrix `P` acting on node masses provided `dt ≤ dx / (2 max|b|)`. On a
//! gradient drift the two parts cancel exactly on the nodal Boltzmann density,
//! so it is a fixed point to round-off.
//!
//! Space-time harmonic functions are marched backward with `Pᵀ`, which makes
//! `Σ_i φ_i m_i` exactly invariant along a flow produced by the same steps.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::functionals::{boltzmann_density, Hamiltonian, Temperature};
use crate::grid::{
    divergence_values, floored_ln, gradient_values, integrate_values, DensityField, DensityFlow, Grid1D,
    VectorField,
};
use crate::tridiag::Tridiagonal;

pub mod tol {
    /// Unit mass of every Fokker-Planck frame.
    pub const MASS: f64 = 1e-10;
    /// Most negative node value accepted before clamping.
    pub const NEGATIVITY: f64 = -1e-12;
    /// Per-node drift of a Boltzmann initial condition.
    pub const STATIONARY: f64 = 1e-6;
    /// `b₊ − b₋ − σ² ∇log ρ`, per node.
    pub const DUALITY: f64 = 1e-10;
    /// Continuity and backward Fokker-Planck L1 residuals at `n = 401`, `dt = 1e-4`.
    pub const RESIDUAL: f64 = 1e-3;
    /// Stationary backward Fokker-Planck residual.
    pub const STATIONARY_RESIDUAL: f64 = 1e-6;
    /// Relative mismatch between a measured and a predicted entropy rate.
    pub const RATE_RELATIVE: f64 = 0.01;
    /// Frames with `D` below this are excluded from rate comparisons.
    pub const RATE_MIN_ENTROPY: f64 = 1e-4;
    /// `D(ρ_t ‖ ρ̄)` at the end of a long relaxation.
    pub const RELAXED_ENTROPY: f64 = 1e-3;
    /// Largest per-step increase of a relative entropy that must not grow.
    pub const MONOTONE: f64 = 1e-10;
    /// Drift of `∫ φ_t ρ_t` in `t`.
    pub const MARTINGALE: f64 = 1e-6;
}

/// Time-indexed node fields sampled with a uniform step.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub grid: Grid1D,
    pub t0: f64,
    pub dt: f64,
    pub nodes: Vec<Vec<f64>>,
    /// Face values, one fewer than nodes per frame.
    pub faces: Vec<Vec<f64>>,
}

impl SampledField {
    fn index(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt).round();
        (k.max(0.0) as usize).min(self.nodes.len() - 1)
    }
}

/// Forward drift `b(x, t)`, evaluated on nodes and on faces.
#[derive(Clone)]
pub enum DriftField {
    Zero,
    Constant(f64),
    /// `−rate (x − center)`.
    Ou { center: f64, rate: f64 },
    /// `−∇H / θ`; face values use the exact difference quotient of `H`.
    Gradient { h: Hamiltonian, theta: f64 },
    Closure(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    Sampled(Arc<SampledField>),
    Sum(Vec<DriftField>),
}

impl fmt::Debug for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Ou { center, rate } => write!(f, "Ou {{ center: {center}, rate: {rate} }}"),
            Self::Gradient { theta, .. } => write!(f, "Gradient {{ theta: {theta} }}"),
            Self::Closure(_) => f.write_str("Closure(..)"),
            Self::Sampled(s) => write!(f, "Sampled({} frames)", s.nodes.len()),
            Self::Sum(parts) => f.debug_list().entries(parts).finish(),
        }
    }
}

impl DriftField {
    pub fn from_fn(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Closure(Arc::new(f))
    }

    pub fn node_values(&self, grid: &Grid1D, t: f64) -> Vec<f64> {
        match self {
            Self::Zero => vec![0.0; grid.len()],
            Self::Constant(c) => vec![*c; grid.len()],
            Self::Ou { center, rate } => grid.sample(|x| -rate * (x - center)),
            Self::Gradient { h, theta } => {
                let dx = grid.dx();
                grid.sample(|x| -(h.eval(x + dx) - h.eval(x - dx)) / (2.0 * dx * theta))
            }
            Self::Closure(f) => grid.sample(|x| f(x, t)),
            Self::Sampled(s) => s.nodes[s.index(t)].clone(),
            Self::Sum(parts) => sum_parts(parts, grid.len(), |p| p.node_values(grid, t)),
        }
    }

    pub fn face_values(&self, grid: &Grid1D, t: f64) -> Vec<f64> {
        let faces = grid.len() - 1;
        match self {
            Self::Zero => vec![0.0; faces],
            Self::Constant(c) => vec![*c; faces],
            Self::Ou { center, rate } => (0..faces).map(|i| -rate * (grid.face(i) - center)).collect(),
            Self::Gradient { h, theta } => {
                let e = h.sample(grid);
                e.windows(2).map(|w| -(w[1] - w[0]) / (grid.dx() * theta)).collect()
            }
            Self::Closure(f) => (0..faces).map(|i| f(grid.face(i), t)).collect(),
            Self::Sampled(s) => s.faces[s.index(t)].clone(),
            Self::Sum(parts) => sum_parts(parts, faces, |p| p.face_values(grid, t)),
        }
    }

    /// Whether the drift does not depend on time.
    pub fn is_autonomous(&self) -> bool {
        match self {
            Self::Closure(_) => false,
            Self::Sampled(s) => s.nodes.len() <= 1,
            Self::Sum(parts) => parts.iter().all(Self::is_autonomous),
            _ => true,
        }
    }

    /// A potential `U` with `b = −∇U`, when the drift is of gradient type.
    pub fn potential(&self) -> Option<Hamiltonian> {
        match self {
            Self::Zero => Some(Hamiltonian::zero()),
            Self::Constant(c) => Some(Hamiltonian::linear(-c)),
            Self::Ou { center, rate } => Some(Hamiltonian::quadratic(*rate, *center)),
            Self::Gradient { h, theta } => {
                let (h, theta) = (h.clone(), *theta);
                Some(Hamiltonian::from_fn(move |x| h.eval(x) / theta))
            }
            _ => None,
        }
    }
}

fn sum_parts(parts: &[DriftField], len: usize, f: impl Fn(&DriftField) -> Vec<f64>) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for p in parts {
        for (a, v) in acc.iter_mut().zip(f(p)) {
            *a += v;
        }
    }
    acc
}

/// Prior diffusion `dξ = b₊ dt + σ dW`.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub drift: DriftField,
    sigma2: f64,
}

impl DiffusionSpec {
    pub fn new(drift: DriftField, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(invalid(format!("σ² must be positive, got {sigma2}")));
        }
        Ok(Self { drift, sigma2 })
    }

    /// Ornstein-Uhlenbeck prior `b₊ = −rate x`.
    pub fn ou(rate: f64, sigma2: f64) -> Result<Self> {
        Self::new(DriftField::Ou { center: 0.0, rate }, sigma2)
    }

    pub fn heat(sigma2: f64) -> Result<Self> {
        Self::new(DriftField::Zero, sigma2)
    }

    /// Gradient flow of the free energy: `b₊ = −∇H/θ`, `σ² = 2`.
    pub fn gradient_flow(h: Hamiltonian, theta: Temperature) -> Self {
        Self { drift: DriftField::Gradient { h, theta: theta.value() }, sigma2: 2.0 }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Same noise, drift `b₊ + u`.
    pub fn with_control(&self, u: &ControlField) -> Self {
        match &u.0 {
            DriftField::Zero => self.clone(),
            extra => Self { drift: DriftField::Sum(vec![self.drift.clone(), extra.clone()]), sigma2: self.sigma2 },
        }
    }

    /// `(U, σ²/2)` such that the stationary density is `exp(−2U/σ²)/Z`.
    pub fn equilibrium(&self) -> Option<(Hamiltonian, Temperature)> {
        let u = self.drift.potential()?;
        Some((u, Temperature::new(0.5 * self.sigma2).ok()?))
    }

    /// Boltzmann density of a gradient-type prior on `grid`.
    pub fn stationary_density(&self, grid: &Grid1D) -> Option<Result<DensityField>> {
        let (u, theta) = self.equilibrium()?;
        Some(boltzmann_density(&u, theta, grid).map(|(d, _)| d))
    }

    /// Largest admissible time step at time `t`: `dx / (2 max|b|)`.
    pub fn stability_bound(&self, grid: &Grid1D, t: f64) -> f64 {
        let bmax = self.drift.face_values(grid, t).iter().fold(0.0f64, |m, b| m.max(b.abs()));
        if bmax == 0.0 {
            f64::INFINITY
        } else {
            grid.dx() / (2.0 * bmax)
        }
    }
}

/// Feedback control `u(x, t)` added to a prior drift.
#[derive(Debug, Clone)]
pub struct ControlField(pub DriftField);

impl ControlField {
    pub fn zero() -> Self {
        Self(DriftField::Zero)
    }

    pub fn from_fn(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(DriftField::from_fn(f))
    }

    pub fn node_values(&self, grid: &Grid1D, t: f64) -> Vec<f64> {
        self.0.node_values(grid, t)
    }

    pub fn vector_field(&self, grid: &Grid1D, t: f64) -> VectorField {
        VectorField::from_parts_unchecked(*grid, self.node_values(grid, t))
    }
}

fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// One step `m ↦ P m` of the scheme and its transpose.
#[derive(Debug, Clone)]
pub struct StepOperator {
    weights: Vec<f64>,
    dt: f64,
    /// `b⁺` and `|b⁻|` per face.
    right: Vec<f64>,
    left: Vec<f64>,
    implicit: Tridiagonal,
}

impl StepOperator {
    pub fn new(grid: &Grid1D, faces: &[f64], sigma2: f64, dt: f64) -> Result<Self> {
        let n = grid.len();
        if faces.len() != n - 1 {
            return Err(invalid("face drift has the wrong length"));
        }
        if faces.iter().any(|b| !b.is_finite()) {
            return Err(invalid("drift is not finite on the grid"));
        }
        let bmax = faces.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        let bound = if bmax == 0.0 { f64::INFINITY } else { grid.dx() / (2.0 * bmax) };
        if dt > bound * (1.0 + 1e-12) {
            return Err(invalid(format!("time step {dt} exceeds the stability bound {bound}")));
        }
        let weights = grid.weights();
        let dx = grid.dx();
        let diff = 0.5 * sigma2;
        let conductance: Vec<f64> = faces.iter().map(|b| diff * bernoulli((b * dx / diff).abs()) / dx).collect();
        let off: Vec<f64> = conductance.iter().map(|a| -dt * a).collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let left = if i > 0 { conductance[i - 1] } else { 0.0 };
                let right = if i + 1 < n { conductance[i] } else { 0.0 };
                weights[i] + dt * (left + right)
            })
            .collect();
        Ok(Self {
            implicit: Tridiagonal::factor(&off, &diag, &off),
            right: faces.iter().map(|b| b.max(0.0)).collect(),
            left: faces.iter().map(|b| (-b).max(0.0)).collect(),
            weights,
            dt,
        })
    }

    /// Advances node masses in place.
    pub fn apply(&self, m: &mut [f64]) {
        let n = m.len();
        let w = &self.weights;
        let dt = self.dt;
        let rho: Vec<f64> = m.iter().zip(w).map(|(m, w)| m / w).collect();
        for f in 0..n - 1 {
            let to_right = dt * self.right[f] * rho[f];
            let to_left = dt * self.left[f] * rho[f + 1];
            m[f] += to_left - to_right;
            m[f + 1] += to_right - to_left;
        }
        self.implicit.solve_in_place(m);
        for (m, w) in m.iter_mut().zip(w) {
            *m *= w;
        }
    }

    /// Applies `Pᵀ` to a node function in place.
    pub fn apply_adjoint(&self, phi: &mut [f64]) {
        let n = phi.len();
        for (p, w) in phi.iter_mut().zip(&self.weights) {
            *p *= w;
        }
        self.implicit.solve_in_place(phi);
        let z = phi.to_vec();
        for j in 0..n {
            let mut acc = z[j];
            if j + 1 < n {
                acc += self.dt * self.right[j] * (z[j + 1] - z[j]) / self.weights[j];
            }
            if j > 0 {
                acc += self.dt * self.left[j - 1] * (z[j - 1] - z[j]) / self.weights[j];
            }
            phi[j] = acc;
        }
    }
}

/// Builds per-step operators for a diffusion, caching them when autonomous.
#[derive(Debug, Clone)]
pub struct Propagator {
    spec: DiffusionSpec,
    grid: Grid1D,
    dt: f64,
    cached: Option<StepOperator>,
}

impl Propagator {
    pub fn new(spec: &DiffusionSpec, grid: &Grid1D, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        let cached = if spec.drift.is_autonomous() {
            Some(StepOperator::new(grid, &spec.drift.face_values(grid, 0.0), spec.sigma2, dt)?)
        } else {
            None
        };
        Ok(Self { spec: spec.clone(), grid: *grid, dt, cached })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Operator for the step starting at time `t`.
    pub fn operator(&self, t: f64) -> Result<std::borrow::Cow<'_, StepOperator>> {
        match &self.cached {
            Some(op) => Ok(std::borrow::Cow::Borrowed(op)),
            None => Ok(std::borrow::Cow::Owned(StepOperator::new(
                &self.grid,
                &self.spec.drift.face_values(&self.grid, t),
                self.spec.sigma2,
                self.dt,
            )?)),
        }
    }
}

/// Number of steps of size `dt` spanning `[t0, t1]`.
pub(crate) fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    if !(t1 > t0) {
        return Err(invalid(format!("time window needs t0 < t1, got [{t0}, {t1}]")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let steps = ((t1 - t0) / dt).round();
    if steps < 1.0 || (steps * dt - (t1 - t0)).abs() > 1e-6 * dt.max(1e-12) * steps.max(1.0) {
        return Err(invalid(format!("time step {dt} does not divide the window [{t0}, {t1}]")));
    }
    Ok(steps as usize)
}

fn clamp_negative(m: &mut [f64], weights: &[f64], t: f64) -> Result<()> {
    for (i, (v, w)) in m.iter_mut().zip(weights).enumerate() {
        if *v / w < tol::NEGATIVITY {
            return Err(Error::SchemeFailure(format!("density {} at node {i}, time {t}", *v / w)));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Time stepper for the forward equation, holding node masses.
#[derive(Debug, Clone)]
pub struct FokkerPlanck {
    propagator: Propagator,
    masses: Vec<f64>,
    weights: Vec<f64>,
    t: f64,
}

impl FokkerPlanck {
    pub fn new(spec: &DiffusionSpec, rho0: &DensityField, t0: f64, dt: f64) -> Result<Self> {
        let grid = *rho0.grid();
        Ok(Self {
            propagator: Propagator::new(spec, &grid, dt)?,
            masses: rho0.masses(),
            weights: grid.weights(),
            t: t0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn step(&mut self) -> Result<()> {
        let op = self.propagator.operator(self.t)?;
        op.apply(&mut self.masses);
        self.t += self.propagator.dt();
        clamp_negative(&mut self.masses, &self.weights, self.t)
    }

    pub fn density(&self) -> DensityField {
        let values = self.masses.iter().zip(&self.weights).map(|(m, w)| m / w).collect();
        DensityField::from_parts_unchecked(*self.propagator.grid(), values)
    }
}

/// Fokker-Planck flow on `[t0, t1]`, one frame per step.
pub fn fp_solve(spec: &DiffusionSpec, rho0: &DensityField, t0: f64, t1: f64, dt: f64) -> Result<DensityFlow> {
    fp_solve_strided(spec, rho0, t0, t1, dt, 1)
}

/// Fokker-Planck flow keeping every `stride`-th frame.
pub fn fp_solve_strided(
    spec: &DiffusionSpec,
    rho0: &DensityField,
    t0: f64,
    t1: f64,
    dt: f64,
    stride: usize,
) -> Result<DensityFlow> {
    let steps = step_count(t0, t1, dt)?;
    if stride == 0 || steps % stride != 0 {
        return Err(invalid(format!("stride {stride} does not divide {steps} steps")));
    }
    let mut fp = FokkerPlanck::new(spec, rho0, t0, dt)?;
    let mut frames = Vec::with_capacity(steps / stride + 1);
    frames.push(rho0.clone());
    for k in 1..=steps {
        fp.step()?;
        if k % stride == 0 {
            frames.push(fp.density());
        }
    }
    DensityFlow::new(*rho0.grid(), t0, dt * stride as f64, frames)
}

/// Forward, backward, current and osmotic drifts of a flow at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicsFrame {
    pub rho: DensityField,
    pub b_plus: VectorField,
    pub b_minus: VectorField,
    pub v_current: VectorField,
    pub u_osmotic: VectorField,
}

/// Nelson's fields for `rho` under `spec` at time `t`.
pub fn nelson_frame(spec: &DiffusionSpec, rho: &DensityField, t: f64) -> KinematicsFrame {
    let grid = *rho.grid();
    let score = gradient_values(&grid, &rho.log_values());
    let b_plus = spec.drift.node_values(&grid, t);
    let s2 = spec.sigma2;
    let b_minus: Vec<f64> = b_plus.iter().zip(&score).map(|(b, s)| b - s2 * s).collect();
    let v: Vec<f64> = b_plus.iter().zip(&score).map(|(b, s)| b - 0.5 * s2 * s).collect();
    let u: Vec<f64> = score.iter().map(|s| 0.5 * s2 * s).collect();
    let vf = |v| VectorField::from_parts_unchecked(grid, v);
    KinematicsFrame { rho: rho.clone(), b_plus: vf(b_plus), b_minus: vf(b_minus), v_current: vf(v), u_osmotic: vf(u) }
}

fn interior_residuals(flow: &DensityFlow, rate_flux: impl Fn(usize) -> Vec<f64>) -> f64 {
    let grid = flow.grid();
    let mut worst = 0.0f64;
    for k in 1..flow.len().saturating_sub(1) {
        let next = flow.frame(k + 1).values();
        let prev = flow.frame(k - 1).values();
        let div = divergence_values(grid, &rate_flux(k));
        let r: Vec<f64> = (0..grid.len())
            .map(|i| ((next[i] - prev[i]) / (2.0 * flow.dt()) + div[i]).abs())
            .collect();
        worst = worst.max(integrate_values(grid, &r));
    }
    worst
}

/// Largest interior L1 residual of `∂ρ/∂t + ∇·(v ρ) = 0`.
pub fn continuity_residual(flow: &DensityFlow, velocities: &[VectorField]) -> Result<f64> {
    if velocities.len() != flow.len() {
        return Err(invalid(format!("{} velocities supplied for {} frames", velocities.len(), flow.len())));
    }
    for v in velocities {
        flow.grid().check_same(v.grid())?;
    }
    Ok(interior_residuals(flow, |k| {
        velocities[k].values().iter().zip(flow.frame(k).values()).map(|(v, r)| v * r).collect()
    }))
}

/// Largest interior L1 residual of the backward equation
/// `∂ρ/∂t + ∇·(b₋ ρ) + (σ²/2) ∇·(ρ ∇log ρ) = 0`.
pub fn backward_fp_residual(flow: &DensityFlow, spec: &DiffusionSpec) -> f64 {
    let half = 0.5 * spec.sigma2;
    interior_residuals(flow, |k| {
        let frame = nelson_frame(spec, flow.frame(k), flow.time(k));
        let score = gradient_values(flow.grid(), &frame.rho.log_values());
        frame
            .b_minus
            .values()
            .iter()
            .zip(&score)
            .zip(frame.rho.values())
            .map(|((b, s), r)| (b + half * s) * r)
            .collect()
    })
}

/// Backward solutions `φ(·, t_k)` of `∂φ/∂t + b₊·∇φ + (σ²/2) Δφ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicFlow {
    pub grid: Grid1D,
    pub t0: f64,
    pub dt: f64,
    pub frames: Vec<Vec<f64>>,
}

impl HarmonicFlow {
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn last(&self) -> &[f64] {
        &self.frames[self.frames.len() - 1]
    }
}

/// Marches `phi1` backward from `t1` to `t0` with the adjoint scheme.
pub fn harmonic_solve(
    spec: &DiffusionSpec,
    grid: &Grid1D,
    phi1: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<HarmonicFlow> {
    grid.check_len(phi1.len(), "terminal function")?;
    if phi1.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(invalid("terminal function must be strictly positive and finite"));
    }
    let steps = step_count(t0, t1, dt)?;
    let prop = Propagator::new(spec, grid, dt)?;
    let mut frames = vec![Vec::new(); steps + 1];
    frames[steps] = phi1.to_vec();
    let mut phi = phi1.to_vec();
    for k in (0..steps).rev() {
        let t = t0 + k as f64 * dt;
        prop.operator(t)?.apply_adjoint(&mut phi);
        if let Some((i, v)) = phi.iter().enumerate().find(|(_, v)| **v < tol::NEGATIVITY) {
            return Err(Error::SchemeFailure(format!("harmonic function {v} at node {i}, time {t}")));
        }
        frames[k] = phi.clone();
    }
    Ok(HarmonicFlow { grid: *grid, t0, dt, frames })
}

/// `log φ` with the density floor applied.
pub(crate) fn log_field(phi: &[f64]) -> Vec<f64> {
    phi.iter().map(|&p| floored_ln(p)).collect()
}
