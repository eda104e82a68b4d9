//! Closed-form values the numerical tests are checked against.

use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub name: &'static str,
    pub value: f64,
    pub meaning: &'static str,
}

/// `W₂` between two Gaussians on the line.
pub fn gaussian_w2(m0: f64, v0: f64, m1: f64, v1: f64) -> f64 {
    ((m0 - m1).powi(2) + (v0.sqrt() - v1.sqrt()).powi(2)).sqrt()
}

/// `D(N(m0, v0) ‖ N(m1, v1))`.
pub fn gaussian_relative_entropy(m0: f64, v0: f64, m1: f64, v1: f64) -> f64 {
    0.5 * (v0 / v1 + (m0 - m1).powi(2) / v1 - 1.0 + (v1 / v0).ln())
}

/// `∫ |∇log(ρ̃/ρ)|² ρ̃` for `ρ̃ = N(m0, v0)`, `ρ = N(m1, v1)`.
pub fn gaussian_relative_fisher(m0: f64, v0: f64, m1: f64, v1: f64) -> f64 {
    // ∇log(ρ̃/ρ) = a x + b
    let a = 1.0 / v1 - 1.0 / v0;
    let b = m0 / v0 - m1 / v1;
    a * a * (v0 + m0 * m0) + 2.0 * a * b * m0 + b * b
}

/// Mean and variance at time `t` of the OU flow `b = −x`, `σ² = 2`.
pub fn ou_moments(m0: f64, v0: f64, t: f64) -> (f64, f64) {
    (m0 * (-t).exp(), 1.0 + (v0 - 1.0) * (-2.0 * t).exp())
}

pub fn table() -> Vec<Oracle> {
    let (ou_mean, ou_var) = ou_moments(2.0, 0.25, 1.0);
    vec![
        Oracle { name: "w2_shift", value: gaussian_w2(0.0, 1.0, 3.0, 1.0), meaning: "W2(N(0,1), N(3,1))" },
        Oracle { name: "w2_scale", value: gaussian_w2(0.0, 1.0, 0.0, 4.0), meaning: "W2(N(0,1), N(0,4))" },
        Oracle {
            name: "w2_pair",
            value: gaussian_w2(-1.0, 0.5, 2.0, 1.5),
            meaning: "W2(N(-1,0.5), N(2,1.5)); its square is the Benamou-Brenier action",
        },
        Oracle {
            name: "relative_entropy_pair",
            value: gaussian_relative_entropy(0.5, 0.5, 0.0, 1.0),
            meaning: "D(N(0.5,0.5) || N(0,1))",
        },
        Oracle {
            name: "relative_fisher_pair",
            value: gaussian_relative_fisher(0.5, 0.5, 0.0, 1.0),
            meaning: "relative Fisher information of N(0.5,0.5) against N(0,1)",
        },
        Oracle { name: "ou_mean_t1", value: ou_mean, meaning: "mean at t = 1 of OU (b = -x, sigma2 = 2) from N(2,0.25)" },
        Oracle { name: "ou_variance_t1", value: ou_var, meaning: "variance at t = 1 of the same OU flow" },
        Oracle { name: "heat_variance_t1", value: 1.0 + 2.0, meaning: "variance at t = 1 of heat flow (sigma2 = 2) from N(0,1)" },
        Oracle {
            name: "partition_function",
            value: (2.0 * PI).sqrt(),
            meaning: "Z for H = x^2/2 at temperature 1",
        },
        Oracle {
            name: "gibbs_free_energy",
            value: -(2.0 * PI).sqrt().ln(),
            meaning: "free energy -theta log Z of the Boltzmann density for H = x^2/2, theta = 1",
        },
    ]
}
