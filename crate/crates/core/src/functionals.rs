//! Thermodynamic and information functionals of densities.
//!
//! Boltzmann's constant is fixed to one, so a [`Temperature`] `θ` plays the
//! role of `kT` everywhere. With that convention
//!
//! ```text
//! S(ρ)       = −∫ ρ log ρ
//! U(H, ρ)    = ∫ H ρ
//! F(H, ρ, θ) = U − θ S
//! ρ̄          = exp(−H/θ) / Z
//! D(ρ ‖ ρ̄)   = F/θ + log Z
//! ```
//!
//! and the last identity turns Gibbs' variational principle into the
//! nonnegativity of relative entropy.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::grid::{
    floored_ln, gradient_values, integrate_values, normalize, DensityField, Grid1D, VectorField,
    DENSITY_FLOOR,
};

pub mod tol {
    /// Lower bound tolerated for relative entropy.
    pub const RELATIVE_ENTROPY_MIN: f64 = -1e-10;
    /// `|D(ρ‖ρ̄) − F/θ − log Z|`.
    pub const FREE_ENERGY_IDENTITY: f64 = 1e-8;
    /// `F(ρ̄) ≤ F(ρ) + GIBBS`.
    pub const GIBBS: f64 = 1e-10;
}

/// Energy as a function of position.
#[derive(Clone)]
pub struct Hamiltonian(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl Hamiltonian {
    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn zero() -> Self {
        Self::from_fn(|_| 0.0)
    }

    /// `stiffness (x − center)² / 2`.
    pub fn quadratic(stiffness: f64, center: f64) -> Self {
        Self::from_fn(move |x| 0.5 * stiffness * (x - center).powi(2))
    }

    pub fn linear(slope: f64) -> Self {
        Self::from_fn(move |x| slope * x)
    }

    /// `(x² − 1)² / 4`.
    pub fn double_well() -> Self {
        Self::from_fn(|x| 0.25 * (x * x - 1.0).powi(2))
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.0)(x)
    }

    pub fn sample(&self, grid: &Grid1D) -> Vec<f64> {
        grid.sample(|x| self.eval(x))
    }
}

impl fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Hamiltonian(..)")
    }
}

/// Positive temperature `θ = kT`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(invalid(format!("temperature must be positive, got {theta}")));
        }
        Ok(Self(theta))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Gibbs entropy `−∫ ρ log ρ`.
pub fn entropy(rho: &DensityField) -> f64 {
    let f: Vec<f64> = rho.values().iter().map(|&r| -r * floored_ln(r)).collect();
    integrate_values(rho.grid(), &f)
}

pub fn internal_energy(h: &Hamiltonian, rho: &DensityField) -> f64 {
    let g = rho.grid();
    let f: Vec<f64> = rho.values().iter().enumerate().map(|(i, r)| h.eval(g.x(i)) * r).collect();
    integrate_values(g, &f)
}

pub fn free_energy(h: &Hamiltonian, rho: &DensityField, theta: Temperature) -> f64 {
    internal_energy(h, rho) - theta.value() * entropy(rho)
}

/// Boltzmann density `exp(−H/θ)/Z` together with the partition function `Z`.
pub fn boltzmann_density(h: &Hamiltonian, theta: Temperature, grid: &Grid1D) -> Result<(DensityField, f64)> {
    let weights: Vec<f64> = h.sample(grid).iter().map(|e| (-e / theta.value()).exp()).collect();
    let z = integrate_values(grid, &weights);
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::DegenerateDensity(format!("partition function is {z}")));
    }
    Ok((normalize(&weights, grid)?, z))
}

/// `∫ ρ̃ log(ρ̃/ρ)`; nodes with `ρ̃ ≤ DENSITY_FLOOR` contribute nothing.
pub fn relative_entropy(rho_tilde: &DensityField, rho: &DensityField) -> Result<f64> {
    rho_tilde.grid().check_same(rho.grid())?;
    Ok(relative_entropy_values(rho_tilde.grid(), rho_tilde.values(), rho.values()))
}

pub(crate) fn relative_entropy_values(grid: &Grid1D, rt: &[f64], r: &[f64]) -> f64 {
    let f: Vec<f64> = rt
        .iter()
        .zip(r)
        .map(|(&a, &b)| if a <= DENSITY_FLOOR { 0.0 } else { a * (a.ln() - floored_ln(b)) })
        .collect();
    integrate_values(grid, &f)
}

/// `|D(ρ‖ρ̄) − F(H, ρ, θ)/θ − log Z|`.
pub fn free_energy_identity_gap(h: &Hamiltonian, rho: &DensityField, theta: Temperature) -> Result<f64> {
    let (bar, z) = boltzmann_density(h, theta, rho.grid())?;
    let d = relative_entropy(rho, &bar)?;
    Ok((d - free_energy(h, rho, theta) / theta.value() - z.ln()).abs())
}

/// Gradient of `log(ρ̃/ρ)` with both densities floored.
pub fn log_ratio_gradient(rho_tilde: &DensityField, rho: &DensityField) -> Result<VectorField> {
    rho_tilde.grid().check_same(rho.grid())?;
    Ok(VectorField::from_parts_unchecked(
        *rho.grid(),
        log_ratio_gradient_values(rho.grid(), rho_tilde.values(), rho.values()),
    ))
}

pub(crate) fn log_ratio_gradient_values(grid: &Grid1D, rt: &[f64], r: &[f64]) -> Vec<f64> {
    let lr: Vec<f64> = rt.iter().zip(r).map(|(&a, &b)| floored_ln(a) - floored_ln(b)).collect();
    gradient_values(grid, &lr)
}

/// Relative Fisher information `∫ |∇ log(ρ̃/ρ)|² ρ̃`.
pub fn relative_fisher(rho_tilde: &DensityField, rho: &DensityField) -> Result<f64> {
    let g = log_ratio_gradient(rho_tilde, rho)?;
    let f: Vec<f64> = g.values().iter().zip(rho_tilde.values()).map(|(s, a)| s * s * a).collect();
    Ok(integrate_values(rho.grid(), &f))
}

/// Rate of `D(ρ_t‖ρ̄)` along a curve with velocity `v`:
/// `⟨∇log ρ + ∇H/θ, v⟩` in `L²(ρ)`.
pub fn free_energy_rate(rho: &DensityField, v: &VectorField, h: &Hamiltonian, theta: Temperature) -> Result<f64> {
    let grid = rho.grid();
    grid.check_same(v.grid())?;
    let mut potential = h.sample(grid);
    for (p, l) in potential.iter_mut().zip(rho.log_values()) {
        *p = l + *p / theta.value();
    }
    let wgrad = gradient_values(grid, &potential);
    let f: Vec<f64> = wgrad
        .iter()
        .zip(v.values())
        .zip(rho.values())
        .map(|((g, v), r)| g * v * r)
        .collect();
    Ok(integrate_values(grid, &f))
}

/// Wasserstein gradient `∇log ρ + ∇H/θ` of `D(ρ‖ρ̄)`.
pub fn wasserstein_gradient(rho: &DensityField, h: &Hamiltonian, theta: Temperature) -> VectorField {
    let grid = rho.grid();
    let potential: Vec<f64> = h
        .sample(grid)
        .iter()
        .zip(rho.log_values())
        .map(|(e, l)| l + e / theta.value())
        .collect();
    VectorField::from_parts_unchecked(*grid, gradient_values(grid, &potential))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::gaussian;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{E, PI};

    fn wide() -> Grid1D {
        Grid1D::new(-8.0, 8.0, 401).unwrap()
    }

    fn theta1() -> Temperature {
        Temperature::new(1.0).unwrap()
    }

    #[test]
    fn entropy_values() {
        let unit = Grid1D::new(0.0, 1.0, 11).unwrap();
        let u = normalize(&[1.0; 11], &unit).unwrap();
        assert_abs_diff_eq!(entropy(&u), 0.0, epsilon = 1e-15);
        let gauss_h = 0.5 * (2.0 * PI * E).ln();
        assert_abs_diff_eq!(entropy(&gaussian(&wide(), 0.0, 1.0).unwrap()), gauss_h, epsilon = 1e-6);
        let narrow = gaussian(&wide(), 0.0, 0.01).unwrap();
        assert_abs_diff_eq!(entropy(&narrow), gauss_h + 0.1f64.ln(), epsilon = 1e-5);
    }

    #[test]
    fn energies() {
        let g = wide();
        let std = gaussian(&g, 0.0, 1.0).unwrap();
        assert_eq!(internal_energy(&Hamiltonian::zero(), &std), 0.0);
        assert_abs_diff_eq!(internal_energy(&Hamiltonian::quadratic(1.0, 0.0), &std), 0.5, epsilon = 1e-8);
        let shifted = gaussian(&g, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(internal_energy(&Hamiltonian::linear(1.0), &shifted), 2.0, epsilon = 1e-8);
        let f = free_energy(&Hamiltonian::quadratic(1.0, 0.0), &std, theta1());
        assert_abs_diff_eq!(f, 0.5 - 0.5 * (2.0 * PI * E).ln(), epsilon = 1e-5);
        let unit = Grid1D::new(0.0, 1.0, 11).unwrap();
        let u = normalize(&[1.0; 11], &unit).unwrap();
        assert_abs_diff_eq!(free_energy(&Hamiltonian::zero(), &u, Temperature::new(3.7).unwrap()), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn boltzmann() {
        let unit = Grid1D::new(0.0, 1.0, 11).unwrap();
        let (u, z) = boltzmann_density(&Hamiltonian::zero(), theta1(), &unit).unwrap();
        assert_abs_diff_eq!(z, 1.0, epsilon = 1e-15);
        assert!(u.values().iter().all(|v| (v - 1.0).abs() < 1e-14));

        let g = wide();
        let (bar, z) = boltzmann_density(&Hamiltonian::quadratic(1.0, 0.0), theta1(), &g).unwrap();
        assert_abs_diff_eq!(z, (2.0 * PI).sqrt(), epsilon = 1e-8);
        for i in 0..g.len() {
            let exact = (-0.5 * g.x(i).powi(2)).exp() / (2.0 * PI).sqrt();
            assert_abs_diff_eq!(bar.values()[i], exact, epsilon = 1e-10);
        }
        let wider = Grid1D::new(-16.0, 16.0, 801).unwrap();
        let (hot, _) = boltzmann_density(&Hamiltonian::quadratic(1.0, 0.0), Temperature::new(2.0).unwrap(), &wider).unwrap();
        assert_abs_diff_eq!(hot.variance(), 2.0, epsilon = 1e-8);
        assert!(Temperature::new(0.0).is_err());
    }

    #[test]
    fn relative_entropy_closed_forms() {
        let g = wide();
        let a = gaussian(&g, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(relative_entropy(&a, &a).unwrap(), 0.0, epsilon = 1e-12);
        let b = gaussian(&g, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(relative_entropy(&a, &b).unwrap(), 0.5, epsilon = 1e-6);
        let c = gaussian(&Grid1D::new(-16.0, 16.0, 801).unwrap(), 0.0, 4.0).unwrap();
        let a_wide = gaussian(c.grid(), 0.0, 1.0).unwrap();
        let expected = 0.5 * (0.25 + 4f64.ln() - 1.0);
        assert_abs_diff_eq!(relative_entropy(&a_wide, &c).unwrap(), expected, epsilon = 1e-5);
        let other = gaussian(&Grid1D::new(-8.0, 8.0, 201).unwrap(), 0.0, 1.0).unwrap();
        assert!(matches!(relative_entropy(&a, &other), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn identity_gap() {
        let g = wide();
        let h = Hamiltonian::quadratic(1.0, 0.0);
        let (bar, _) = boltzmann_density(&h, theta1(), &g).unwrap();
        assert!(free_energy_identity_gap(&h, &bar, theta1()).unwrap() < 1e-10);
        for (m, v) in [(1.0, 1.0), (0.0, 0.25)] {
            let rho = gaussian(&g, m, v).unwrap();
            assert!(free_energy_identity_gap(&h, &rho, theta1()).unwrap() <= tol::FREE_ENERGY_IDENTITY);
        }
    }

    fn perturbed(base: &DensityField, rng: &mut ChaCha8Rng) -> DensityField {
        let g = *base.grid();
        let amp = rng.gen_range(-0.5..0.5);
        let center = rng.gen_range(-2.0..2.0);
        let width: f64 = rng.gen_range(0.2..1.0);
        let f: Vec<f64> = base
            .values()
            .iter()
            .enumerate()
            .map(|(i, r)| r * (1.0 + amp * (-(g.x(i) - center).powi(2) / (2.0 * width * width)).exp()))
            .collect();
        normalize(&f, &g).unwrap()
    }

    #[test]
    fn gibbs_principle_on_random_perturbations() {
        let g = wide();
        let h = Hamiltonian::quadratic(1.0, 0.0);
        let (bar, _) = boltzmann_density(&h, theta1(), &g).unwrap();
        let f_bar = free_energy(&h, &bar, theta1());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let rho = perturbed(&bar, &mut rng);
            assert!(f_bar <= free_energy(&h, &rho, theta1()) + tol::GIBBS);
            assert!(free_energy_identity_gap(&h, &rho, theta1()).unwrap() <= tol::FREE_ENERGY_IDENTITY);
        }
    }

    #[test]
    fn fisher_information() {
        let g = wide();
        let a = gaussian(&g, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(relative_fisher(&a, &a).unwrap(), 0.0, epsilon = 1e-12);
        for m in [0.5, 1.0, 2.0] {
            let b = gaussian(&g, m, 1.0).unwrap();
            assert_abs_diff_eq!(relative_fisher(&b, &a).unwrap(), m * m, epsilon = 1e-4);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = perturbed(&a, &mut rng);
            let q = perturbed(&a, &mut rng);
            assert!(relative_fisher(&p, &q).unwrap() >= 0.0);
            assert!(relative_entropy(&p, &q).unwrap() >= tol::RELATIVE_ENTROPY_MIN);
        }
    }

    #[test]
    fn dissipation_rate() {
        let g = wide();
        let h = Hamiltonian::quadratic(1.0, 0.0);
        let (bar, _) = boltzmann_density(&h, theta1(), &g).unwrap();
        let v = VectorField::from_fn(g, |x| (x).sin() + 0.3).unwrap();
        assert!(free_energy_rate(&bar, &v, &h, theta1()).unwrap().abs() < 1e-8);
        let rho = gaussian(&g, 1.0, 0.5).unwrap();
        assert_eq!(free_energy_rate(&rho, &VectorField::zeros(g), &h, theta1()).unwrap(), 0.0);
        let steepest: Vec<f64> = wasserstein_gradient(&rho, &h, theta1()).values().iter().map(|x| -x).collect();
        let steepest = VectorField::new(g, steepest).unwrap();
        let rate = free_energy_rate(&rho, &steepest, &h, theta1()).unwrap();
        assert_abs_diff_eq!(rate, -relative_fisher(&rho, &bar).unwrap(), epsilon = 1e-8);
    }

    #[test]
    fn functionals_converge_under_refinement() {
        let h = Hamiltonian::quadratic(1.0, 0.0);
        let values = |n: usize| {
            let g = Grid1D::new(0.0, 1.0, n).unwrap();
            let rho = DensityField::from_fn(g, |x| 1.0 + x).unwrap();
            [entropy(&rho), internal_energy(&h, &rho), free_energy(&h, &rho, theta1())]
        };
        let reference = values(4001);
        let coarse = values(101);
        let fine = values(201);
        for q in 0..3 {
            let ratio = (coarse[q] - reference[q]).abs() / (fine[q] - reference[q]).abs();
            assert!((3.5..=4.5).contains(&ratio), "functional {q}: ratio {ratio}");
        }
    }
}
