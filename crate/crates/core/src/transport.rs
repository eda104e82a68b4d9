//! Static and dynamic optimal transport on the line.
//!
//! In one dimension the quadratic-cost problem is solved by monotone
//! rearrangement: the optimal map is `T = Q₁ ∘ F₀`, with `F₀` the cdf of the
//! source and `Q₁` the quantile function of the target. Everything here is
//! built on the piecewise-linear quantile function of the trapezoid cdf:
//!
//! * [`w2_distance`] integrates `(Q₀ − Q₁)²` over `(0, 1)` with a midpoint
//!   rule,
//! * [`displacement_interpolate`] pushes `ν₀` along `(1 − t) I + t T` by
//!   interpolating quantiles,
//! * [`benamou_brenier_action`] evaluates the kinetic action of a supplied
//!   `(flow, velocity)` pair; along the displacement interpolation it equals
//!   `W₂²`.
//!
//! Discrete Kantorovich couplings are computed by log-domain Sinkhorn and
//! checked against [`sorted_matching_oracle`], the exact 1-D matching cost.

use ndarray::Array2;

use crate::error::{invalid, Error, Result};
use crate::grid::{integrate_values, normalize, DensityField, DensityFlow, Grid1D, VectorField, DENSITY_FLOOR};

pub mod tol {
    /// Default stopping tolerance on Sinkhorn marginal L1 errors.
    pub const SINKHORN: f64 = 1e-9;
    pub const SINKHORN_MAX_ITER: usize = 100_000;
    /// Endpoint reproduction of the displacement interpolation, per node.
    pub const INTERPOLATION_ENDPOINT: f64 = 1e-8;
    /// `|W₂(μ_t, ν₀) − t W₂(ν₀, ν₁)|`.
    pub const CONSTANT_SPEED: f64 = 1e-3;
    /// Relative gap between the Benamou-Brenier action and `W₂²`.
    pub const ACTION_RELATIVE: f64 = 0.02;
    /// Lower bound on second differences of `−S(μ_t)` in `t`.
    pub const DISPLACEMENT_CONVEXITY: f64 = -1e-4;
}

/// Trapezoid cdf of a density together with its left-continuous inverse.
#[derive(Debug, Clone)]
pub struct Quantile {
    grid: Grid1D,
    cdf: Vec<f64>,
}

impl Quantile {
    pub fn new(rho: &DensityField) -> Self {
        let g = *rho.grid();
        let r = rho.values();
        let mut cdf = Vec::with_capacity(r.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 1..r.len() {
            acc += 0.5 * g.dx() * (r[i - 1] + r[i]);
            cdf.push(acc);
        }
        // absorb round-off so the cdf ends exactly at one
        let total = acc;
        if total > 0.0 {
            for c in &mut cdf {
                *c = (*c / total).min(1.0);
            }
        }
        Self { grid: g, cdf }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Cdf values at the nodes.
    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Piecewise-linear interpolation of the cdf.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g.x_min() {
            return 0.0;
        }
        if x >= g.x_max() {
            return 1.0;
        }
        let s = (x - g.x_min()) / g.dx();
        let i = (s.floor() as usize).min(g.len() - 2);
        let frac = s - i as f64;
        self.cdf[i] + frac * (self.cdf[i + 1] - self.cdf[i])
    }

    /// Left-most `x` with `cdf(x) ≥ u`.
    pub fn quantile(&self, u: f64) -> f64 {
        let g = &self.grid;
        let i = self.cdf.partition_point(|&c| c < u);
        if i == 0 {
            return g.x_min();
        }
        if i == self.cdf.len() {
            return g.x_max();
        }
        let (lo, hi) = (self.cdf[i - 1], self.cdf[i]);
        g.x(i - 1) + g.dx() * (u - lo) / (hi - lo)
    }
}

/// Cdf values and quantile function of `rho`.
pub fn cdf_and_quantile(rho: &DensityField) -> (Vec<f64>, Quantile) {
    let q = Quantile::new(rho);
    (q.cdf().to_vec(), q)
}

fn midpoint_levels(m: usize) -> impl Iterator<Item = f64> {
    (0..m).map(move |k| (k as f64 + 0.5) / m as f64)
}

/// Quadratic Wasserstein distance via the quantile formula.
pub fn w2_distance(nu0: &DensityField, nu1: &DensityField) -> f64 {
    let q0 = Quantile::new(nu0);
    let q1 = Quantile::new(nu1);
    let m = 4 * nu0.grid().len().max(nu1.grid().len());
    let sum: f64 = midpoint_levels(m).map(|u| (q0.quantile(u) - q1.quantile(u)).powi(2)).sum();
    (sum / m as f64).sqrt()
}

/// Nondecreasing image positions of a monotone map, one per node.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    grid: Grid1D,
    t_values: Vec<f64>,
}

impl TransportMap {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.t_values
    }

    /// Linear interpolation between nodes, constant outside the grid.
    pub fn apply(&self, x: f64) -> f64 {
        interp(&self.grid, &self.t_values, x)
    }
}

/// Brenier map `Q₁ ∘ F₀` from `nu0` to `nu1`.
pub fn monotone_map(nu0: &DensityField, nu1: &DensityField) -> TransportMap {
    let q0 = Quantile::new(nu0);
    let q1 = Quantile::new(nu1);
    let t_values = q0.cdf().iter().map(|&u| q1.quantile(u)).collect();
    TransportMap { grid: *nu0.grid(), t_values }
}

pub(crate) fn interp(grid: &Grid1D, values: &[f64], x: f64) -> f64 {
    if x <= grid.x_min() {
        return values[0];
    }
    if x >= grid.x_max() {
        return values[values.len() - 1];
    }
    let s = (x - grid.x_min()) / grid.dx();
    let i = (s.floor() as usize).min(grid.len() - 2);
    let frac = s - i as f64;
    values[i] + frac * (values[i + 1] - values[i])
}

/// McCann interpolation between two densities.
///
/// The interpolated quantile function `(1 − t) Q₀ + t Q₁` is piecewise linear
/// with breakpoints at the union of both cdf levels. Densities follow from the
/// change of variables `1/ρ_t = (1 − t)/ν₀(Q₀) + t/ν₁(Q₁)`, which reproduces
/// the endpoint densities node for node.
#[derive(Debug, Clone)]
pub struct DisplacementInterpolation {
    nu0: DensityField,
    nu1: DensityField,
    levels: Vec<f64>,
    x0: Vec<f64>,
    x1: Vec<f64>,
}

impl DisplacementInterpolation {
    pub fn new(nu0: &DensityField, nu1: &DensityField) -> Self {
        let q0 = Quantile::new(nu0);
        let q1 = Quantile::new(nu1);
        let mut levels: Vec<f64> = q0.cdf().iter().chain(q1.cdf()).copied().collect();
        levels.push(1.0);
        levels.sort_by(|a, b| a.total_cmp(b));
        levels.dedup();
        let x0 = levels.iter().map(|&u| q0.quantile(u)).collect();
        let x1 = levels.iter().map(|&u| q1.quantile(u)).collect();
        Self { nu0: nu0.clone(), nu1: nu1.clone(), levels, x0, x1 }
    }

    fn check_t(t: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid(format!("interpolation time must lie in [0, 1], got {t}")));
        }
        Ok(())
    }

    /// Cdf level and the two Lagrangian preimages of `x` at time `t`, or
    /// `None` outside the support of `μ_t`.
    fn locate(&self, x: f64, t: f64) -> Option<(f64, f64, f64)> {
        let pos = |k: usize| (1.0 - t) * self.x0[k] + t * self.x1[k];
        let last = self.levels.len() - 1;
        let k = partition(last + 1, |k| pos(k) <= x);
        if k == 0 || (k == last + 1 && x > pos(last)) {
            return None;
        }
        if k == last + 1 {
            return Some((1.0, self.x0[last], self.x1[last]));
        }
        let (a, b) = (pos(k - 1), pos(k));
        let s = if b > a { (x - a) / (b - a) } else { 1.0 };
        let lerp = |v: &[f64]| v[k - 1] + s * (v[k] - v[k - 1]);
        Some((lerp(&self.levels), lerp(&self.x0), lerp(&self.x1)))
    }

    /// `μ*_t` on the grid of `ν₀`.
    pub fn density(&self, t: f64) -> Result<DensityField> {
        Self::check_t(t)?;
        let g = *self.nu0.grid();
        let vals: Vec<f64> = (0..g.len())
            .map(|i| match self.locate(g.x(i), t) {
                None => 0.0,
                Some((_, y0, y1)) => {
                    let r0 = interp(self.nu0.grid(), self.nu0.values(), y0).max(DENSITY_FLOOR);
                    let r1 = interp(self.nu1.grid(), self.nu1.values(), y1).max(DENSITY_FLOOR);
                    let inv = (1.0 - t) / r0 + t / r1;
                    let r = 1.0 / inv;
                    if r <= DENSITY_FLOOR { 0.0 } else { r }
                }
            })
            .collect();
        normalize(&vals, &g)
    }

    /// Eulerian velocity `T(X₀) − X₀` of the geodesic at time `t`.
    pub fn velocity(&self, t: f64) -> Result<VectorField> {
        Self::check_t(t)?;
        let g = *self.nu0.grid();
        let vals = (0..g.len())
            .map(|i| self.locate(g.x(i), t).map_or(0.0, |(_, y0, y1)| y1 - y0))
            .collect();
        VectorField::new(g, vals)
    }

    /// `steps + 1` equally spaced frames on `[0, 1]` with matching velocities.
    pub fn flow(&self, steps: usize) -> Result<(DensityFlow, Vec<VectorField>)> {
        self.reparametrized_flow(steps, |t| (t, 1.0))
    }

    /// Frames of `μ*_{s(t)}` for a time change `s` given as `t ↦ (s(t), s'(t))`.
    /// The velocities satisfy the continuity equation of the reparametrized curve.
    pub fn reparametrized_flow(
        &self,
        steps: usize,
        schedule: impl Fn(f64) -> (f64, f64),
    ) -> Result<(DensityFlow, Vec<VectorField>)> {
        if steps < 1 {
            return Err(invalid("flow needs at least one step"));
        }
        let dt = 1.0 / steps as f64;
        let mut frames = Vec::with_capacity(steps + 1);
        let mut vels = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let (s, ds) = schedule(k as f64 * dt);
            let s = s.clamp(0.0, 1.0);
            frames.push(self.density(s)?);
            let v = self.velocity(s)?;
            let scaled = v.values().iter().map(|x| x * ds).collect();
            vels.push(VectorField::new(*v.grid(), scaled)?);
        }
        Ok((DensityFlow::new(*self.nu0.grid(), 0.0, dt, frames)?, vels))
    }
}

fn partition(len: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, len);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `[(1 − t) I + t T] # ν₀`.
pub fn displacement_interpolate(nu0: &DensityField, nu1: &DensityField, t: f64) -> Result<DensityField> {
    DisplacementInterpolation::check_t(t)?;
    DisplacementInterpolation::new(nu0, nu1).density(t)
}

/// Time-trapezoid of `∫ v² ρ_t` over the span of `flow`.
pub fn benamou_brenier_action(flow: &DensityFlow, velocities: &[VectorField]) -> Result<f64> {
    if velocities.len() != flow.len() {
        return Err(invalid(format!(
            "{} velocities supplied for {} frames",
            velocities.len(),
            flow.len()
        )));
    }
    let grid = flow.grid();
    let kinetic: Vec<f64> = flow
        .frames()
        .iter()
        .zip(velocities)
        .map(|(rho, v)| {
            let f: Vec<f64> = v.values().iter().zip(rho.values()).map(|(v, r)| v * v * r).collect();
            integrate_values(grid, &f)
        })
        .collect::<Vec<_>>();
    let n = kinetic.len();
    let inner: f64 = kinetic[1..n - 1].iter().sum();
    Ok(flow.dt() * (inner + 0.5 * (kinetic[0] + kinetic[n - 1])))
}

/// Coupling of two discrete probability vectors.
#[derive(Debug, Clone)]
pub struct DiscreteCoupling {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub pi: Array2<f64>,
    /// Sinkhorn sweeps performed.
    pub iterations: usize,
}

impl DiscreteCoupling {
    /// `⟨cost, π⟩`.
    pub fn cost(&self, cost: &Array2<f64>) -> f64 {
        (&self.pi * cost).sum()
    }

    /// L1 errors of the row and column marginals.
    pub fn marginal_errors(&self) -> (f64, f64) {
        let rows: f64 = self.pi.rows().into_iter().zip(&self.p).map(|(r, p)| (r.sum() - p).abs()).sum();
        let cols: f64 = self.pi.columns().into_iter().zip(&self.q).map(|(c, q)| (c.sum() - q).abs()).sum();
        (rows, cols)
    }
}

fn check_weights(w: &[f64], what: &str) -> Result<()> {
    if w.is_empty() {
        return Err(invalid(format!("{what} is empty")));
    }
    if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(invalid(format!("{what} must be strictly positive")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("{what} sums to {s}, expected 1")));
    }
    Ok(())
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Entropic coupling by log-domain Sinkhorn with fixed `eps`.
///
/// Stops once the row-marginal L1 error is at most `tol`; the column marginal
/// is exact after every sweep.
pub fn sinkhorn_coupling(
    p: &[f64],
    q: &[f64],
    cost: &Array2<f64>,
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DiscreteCoupling> {
    check_weights(p, "source weights")?;
    check_weights(q, "target weights")?;
    let (n, m) = cost.dim();
    if n != p.len() || m != q.len() {
        return Err(invalid(format!("cost is {n}x{m}, weights are {}x{}", p.len(), q.len())));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(invalid("cost matrix is not finite"));
    }
    if !(eps > 0.0) {
        return Err(invalid(format!("regularization must be positive, got {eps}")));
    }
    let log_p: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let log_q: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let update_g = |f: &[f64], g: &mut [f64]| {
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[[i, j]]) / eps));
            g[j] = eps * (log_q[j] - lse);
        }
    };
    update_g(&f, &mut g);
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        residual = 0.0;
        for i in 0..n {
            let lse = log_sum_exp((0..m).map(|j| (g[j] - cost[[i, j]]) / eps));
            residual += ((f[i] / eps + lse).exp() - p[i]).abs();
            f[i] = eps * (log_p[i] - lse);
        }
        if residual <= tol {
            // f was already refreshed; recompute g so the plan uses a consistent pair
            update_g(&f, &mut g);
            let pi = Array2::from_shape_fn((n, m), |(i, j)| ((f[i] + g[j] - cost[[i, j]]) / eps).exp());
            return Ok(DiscreteCoupling { p: p.to_vec(), q: q.to_vec(), pi, iterations: it + 1 });
        }
        update_g(&f, &mut g);
    }
    Err(Error::NoConvergence { iterations: max_iter, residual })
}

/// Exact quadratic matching cost between two equally sized uniform point clouds.
pub fn sorted_matching_oracle(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid(format!("point counts differ: {} vs {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(invalid("point sets are empty"));
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    ys.sort_by(|a, b| a.total_cmp(b));
    Ok(xs.iter().zip(&ys).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64)
}

/// Squared-distance cost matrix between two point sets.
pub fn quadratic_cost(x: &[f64], y: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((x.len(), y.len()), |(i, j)| (x[i] - y[j]).powi(2))
}
