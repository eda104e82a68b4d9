use entroflow::bridge::{ptcontr_rate, same_fp_decay_rate};
use entroflow::densities::{gaussian, mixture, Component};
use entroflow::functionals::{
    self, boltzmann_density, free_energy, free_energy_identity_gap, log_ratio_gradient, relative_entropy, relative_fisher, Hamiltonian,
    Temperature,
};
use entroflow::grid::{self, divergence_flux, gradient, integrate, normalize};
use entroflow::kinematics::{self, fp_solve_strided, harmonic_solve, nelson_frame, DiffusionSpec, DriftField};
use entroflow::product_flow::{self, fluxes, product_flow_step, pt2006_rate, PairState};
use entroflow::transport::w2_distance;
use entroflow::{DensityField, Grid1D, VectorField};
use proptest::prelude::*;

fn wide() -> Grid1D {
    Grid1D::new(-8.0, 8.0, 401).unwrap()
}

fn component() -> impl Strategy<Value = Component> {
    (0.2f64..1.0, -2.0f64..2.0, 0.3f64..1.5).prop_map(|(weight, mean, var)| Component { weight, mean, var })
}

fn mixture_density() -> impl Strategy<Value = DensityField> {
    prop::collection::vec(component(), 1..4).prop_map(|c| mixture(&wide(), &c).unwrap())
}

fn smooth_field() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 4).prop_map(|c| {
        wide().sample(|x| c[0] + c[1] * (0.5 * x).sin() + c[2] * (0.3 * x).cos() + c[3] * (-x * x / 4.0).exp())
    })
}

fn dot(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn integration_by_parts(f in smooth_field(), j in smooth_field()) {
        let g = wide();
        let mut j = j;
        j[0] = 0.0;
        let last = j.len() - 1;
        j[last] = 0.0;
        let jf = VectorField::new(g, j.clone()).unwrap();
        let grad = gradient(&f, &g).unwrap();
        let lhs = integrate(&dot(grad.values(), &j), &g).unwrap() + integrate(&dot(&f, &divergence_flux(&jf)), &g).unwrap();
        prop_assert!(lhs.abs() <= grid::tol::INTEGRATION_BY_PARTS);
    }

    #[test]
    fn divergence_conserves_mass(j in smooth_field()) {
        let g = wide();
        let div = divergence_flux(&VectorField::new(g, j).unwrap());
        prop_assert!(integrate(&div, &g).unwrap().abs() <= grid::tol::DIVERGENCE_MASS);
    }

    #[test]
    fn gradient_exact_on_affine(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let g = wide();
        let grad = gradient(&g.sample(|x| a + b * x), &g).unwrap();
        prop_assert!(grad.values().iter().all(|v| (v - b).abs() <= 1e-9));
    }

    #[test]
    fn entropy_functionals_are_consistent(rho in mixture_density(), other in mixture_density()) {
        prop_assert!(relative_entropy(&rho, &other).unwrap() >= functionals::tol::RELATIVE_ENTROPY_MIN);
        prop_assert!(relative_fisher(&rho, &other).unwrap() >= 0.0);
        let h = Hamiltonian::quadratic(1.0, 0.0);
        let theta = Temperature::new(1.0).unwrap();
        prop_assert!(free_energy_identity_gap(&h, &rho, theta).unwrap() <= functionals::tol::FREE_ENERGY_IDENTITY);
        let (bar, _) = boltzmann_density(&h, theta, rho.grid()).unwrap();
        prop_assert!(free_energy(&h, &bar, theta) <= free_energy(&h, &rho, theta) + functionals::tol::GIBBS);
    }

    #[test]
    fn w2_metric_axioms(a in mixture_density(), b in mixture_density(), c in mixture_density()) {
        let ab = w2_distance(&a, &b);
        prop_assert!((ab - w2_distance(&b, &a)).abs() <= 1e-10);
        prop_assert!(w2_distance(&a, &a) <= 1e-8);
        prop_assert!(ab <= w2_distance(&a, &c) + w2_distance(&c, &b) + 1e-6);
    }

    #[test]
    fn w2_translation(k in -40i32..40, m in -1.0f64..1.0, v in 0.3f64..1.0, c in -2.0f64..2.0) {
        // wide enough that every shifted tail stays far below the density floor scale
        let g = Grid1D::new(-14.0, 14.0, 701).unwrap();
        let shift = k as f64 * g.dx();
        let a = gaussian(&g, m, v).unwrap();
        let b = gaussian(&g, -m, 1.5 * v).unwrap();
        let a2 = gaussian(&g, m + shift, v).unwrap();
        let b2 = gaussian(&g, -m + shift, 1.5 * v).unwrap();
        prop_assert!((w2_distance(&a, &b) - w2_distance(&a2, &b2)).abs() <= 1e-8);
        let moved = gaussian(&g, m + c, v).unwrap();
        prop_assert!((w2_distance(&a, &moved) - c.abs()).abs() <= 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fokker_planck_mass_positivity_martingale(
        rate in 0.2f64..2.0,
        sigma2 in 0.5f64..3.0,
        m in -2.0f64..2.0,
        v in 0.3f64..1.5,
        phi_coeffs in prop::collection::vec(-0.5f64..0.5, 2),
    ) {
        let g = wide();
        let spec = DiffusionSpec::ou(rate, sigma2).unwrap();
        let flow = fp_solve_strided(&spec, &gaussian(&g, m, v).unwrap(), 0.0, 0.2, 1e-3, 1).unwrap();
        let phi1 = g.sample(|x| 1.0 + phi_coeffs[0] * (0.7 * x).sin() + phi_coeffs[1] * (-x * x).exp());
        let phi = harmonic_solve(&spec, &g, &phi1, 0.0, 0.2, 1e-3).unwrap();
        let pairing = |k: usize| integrate(&dot(&phi.frames[k], flow.frame(k).values()), &g).unwrap();
        let start = pairing(0);
        for k in 0..flow.len() {
            let f = flow.frame(k);
            prop_assert!((f.mass() - 1.0).abs() <= kinematics::tol::MASS);
            prop_assert!(f.values().iter().all(|v| *v >= 0.0));
            prop_assert!((pairing(k) - start).abs() <= kinematics::tol::MARTINGALE);
            let frame = nelson_frame(&spec, f, flow.time(k));
            let score = gradient(&f.log_values(), &g).unwrap();
            for i in 0..g.len() {
                let gap = frame.b_plus.values()[i] - frame.b_minus.values()[i] - sigma2 * score.values()[i];
                prop_assert!(gap.abs() <= kinematics::tol::DUALITY * (1.0 + frame.b_minus.values()[i].abs()));
            }
        }
    }

    #[test]
    fn product_flow_structure(m in -1.0f64..1.0, v in 0.4f64..0.9) {
        let g = wide();
        let s = PairState::new(gaussian(&g, m, v).unwrap(), gaussian(&g, 0.0, 1.0).unwrap()).unwrap();
        let (j1, j2) = fluxes(&s);
        let worst = j1.values().iter().zip(j2.values()).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= product_flow::tol::OPPOSITE_FLUX * j1.max_abs());
        let next = product_flow_step(&s, 1e-5).unwrap();
        for i in 0..g.len() {
            let change = next.rho_tilde.values()[i] - s.rho_tilde.values()[i] + next.rho.values()[i] - s.rho.values()[i];
            prop_assert!(change.abs() <= product_flow::tol::OPPOSITE_RATE);
        }
        prop_assert!(next.relative_entropy() < s.relative_entropy());
    }

    #[test]
    fn zero_control_is_same_fp_decay(a in mixture_density(), b in mixture_density(), sigma2 in 0.1f64..4.0) {
        let zero = ptcontr_rate(&a, &b, &VectorField::zeros(*a.grid()), sigma2).unwrap();
        let decay = same_fp_decay_rate(&a, &b, sigma2).unwrap();
        prop_assert!((zero - decay).abs() <= 1e-14);
        prop_assert!((decay + 0.5 * sigma2 * relative_fisher(&a, &b).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn pt2006_along_arbitrary_continuity_flows(
        c in prop::collection::vec(-0.6f64..0.6, 4),
        m in -1.0f64..1.0,
    ) {
        let g = wide();
        let (c0, c1, c2, c3) = (c[0], c[1], c[2], c[3]);
        let fast = DiffusionSpec::new(DriftField::from_fn(move |x, _| c0 - 1.0 * x + c1 * (0.5 * x).sin()), 1.0).unwrap();
        let slow = DiffusionSpec::new(DriftField::from_fn(move |x, _| c2 - 0.4 * x + c3 * (0.3 * x).cos()), 2.0).unwrap();
        let dt = 1e-4;
        let ft = fp_solve_strided(&fast, &gaussian(&g, m, 0.5).unwrap(), 0.0, 0.6, dt, 100).unwrap();
        let fr = fp_solve_strided(&slow, &gaussian(&g, -m, 1.5).unwrap(), 0.0, 0.6, dt, 100).unwrap();
        let d: Vec<f64> = (0..fr.len()).map(|k| relative_entropy(ft.frame(k), fr.frame(k)).unwrap()).collect();
        for k in 1..fr.len() - 1 {
            let s = PairState::new(ft.frame(k).clone(), fr.frame(k).clone()).unwrap();
            let vt = nelson_frame(&fast, &s.rho_tilde, ft.time(k)).v_current;
            let v = nelson_frame(&slow, &s.rho, fr.time(k)).v_current;
            let predicted = pt2006_rate(&s, &vt, &v).unwrap();
            let measured = (d[k + 1] - d[k - 1]) / (2.0 * fr.dt());
            // the two flows' contributions can cancel, so the error is judged
            // against the size of the integrand rather than of the integral
            let g1 = log_ratio_gradient(&s.rho_tilde, &s.rho).unwrap();
            let scale: Vec<f64> = (0..g.len())
                .map(|i| (g1.values()[i] * (vt.values()[i] - v.values()[i]) * s.rho_tilde.values()[i]).abs())
                .collect();
            let scale = integrate(&scale, &g).unwrap();
            prop_assert!(
                (measured - predicted).abs() <= product_flow::tol::RATE_RELATIVE * scale,
                "k={} measured {} predicted {} scale {}", k, measured, predicted, scale
            );
        }
    }
}

#[test]
fn normalization_is_idempotent() {
    let g = wide();
    let rho = gaussian(&g, 0.3, 0.6).unwrap();
    let again = normalize(rho.values(), &g).unwrap();
    for (a, b) in rho.values().iter().zip(again.values()) {
        assert!((a - b).abs() <= 1e-15);
    }
}
