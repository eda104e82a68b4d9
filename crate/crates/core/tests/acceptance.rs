//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary so every criterion reports even when an earlier one
//! fails; the process exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use entroflow::bridge::{
    self, bridge_entropy_rate, bridge_interpolation, fortet_solve, half_bridge_final, prior_kernel,
    same_fp_decay_rate,
};
use entroflow::densities::gaussian;
use entroflow::functionals::{
    self, boltzmann_density, free_energy_identity_gap, relative_entropy, relative_fisher, Hamiltonian, Temperature,
};
use entroflow::kinematics::{self, backward_fp_residual, fp_solve, fp_solve_strided, nelson_frame, DiffusionSpec};
use entroflow::product_flow::{
    self, fluxes, product_flow_step, product_rates, pt2006_rate, rate_comparison, reff_rate, PairState,
};
use entroflow::transport::{self, benamou_brenier_action, displacement_interpolate, w2_distance, DisplacementInterpolation};
use entroflow::{DensityField, DensityFlow, Grid1D};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn grid(n: usize) -> Grid1D {
    Grid1D::new(-8.0, 8.0, n).unwrap()
}

fn ou() -> DiffusionSpec {
    DiffusionSpec::ou(1.0, 2.0).unwrap()
}

/// Largest relative gap between a centered difference of `d` and `predicted`.
fn max_rate_error(d: &[f64], h: f64, predicted: impl Fn(usize) -> f64, include: impl Fn(usize) -> bool) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut count = 0;
    for k in 1..d.len() - 1 {
        if !include(k) {
            continue;
        }
        let measured = (d[k + 1] - d[k - 1]) / (2.0 * h);
        let p = predicted(k);
        worst = worst.max((measured - p).abs() / p.abs());
        count += 1;
    }
    (worst, count)
}

struct ReffRun {
    rate_error: f64,
    frames: usize,
    dominated: bool,
}

/// Steepest-descent product flow from a Gaussian pair until `D < 1e-5`.
fn reff_run(n: usize, dt: f64, stride: usize, max_frames: usize) -> ReffRun {
    let g = grid(n);
    let mut s = PairState::new(gaussian(&g, 0.5, 0.5).unwrap(), gaussian(&g, 0.0, 1.0).unwrap()).unwrap();
    let mut states = vec![s.clone()];
    while states.last().unwrap().relative_entropy() >= product_flow::tol::RATE_MIN_ENTROPY && states.len() < max_frames {
        for _ in 0..stride {
            s = product_flow_step(&s, dt).unwrap();
        }
        states.push(s.clone());
    }
    let d: Vec<f64> = states.iter().map(PairState::relative_entropy).collect();
    let (rate_error, frames) = max_rate_error(&d, dt * stride as f64, |k| reff_rate(&states[k]), |k| {
        d[k + 1] >= product_flow::tol::RATE_MIN_ENTROPY
    });
    let dominated = states.iter().all(|st| {
        let (reff, same) = rate_comparison(st, 2.0).unwrap();
        reff <= same
    });
    ReffRun { rate_error, frames, dominated }
}

/// Relative entropy between two independent OU flows against its predicted rate.
fn pt2006_run(n: usize, dt: f64, spacing: f64) -> (f64, usize) {
    let g = grid(n);
    let fast = DiffusionSpec::ou(1.0, 2.0).unwrap();
    let slow = DiffusionSpec::ou(0.5, 2.0).unwrap();
    let stride = (spacing / dt).round() as usize;
    let ft = fp_solve_strided(&fast, &gaussian(&g, 1.5, 0.5).unwrap(), 0.0, 1.0, dt, stride).unwrap();
    let fr = fp_solve_strided(&slow, &gaussian(&g, -1.0, 1.5).unwrap(), 0.0, 1.0, dt, stride).unwrap();
    let d: Vec<f64> = (0..fr.len()).map(|k| relative_entropy(ft.frame(k), fr.frame(k)).unwrap()).collect();
    max_rate_error(
        &d,
        fr.dt(),
        |k| {
            let s = PairState::new(ft.frame(k).clone(), fr.frame(k).clone()).unwrap();
            let vt = nelson_frame(&fast, &s.rho_tilde, ft.time(k)).v_current;
            let v = nelson_frame(&slow, &s.rho, fr.time(k)).v_current;
            pt2006_rate(&s, &vt, &v).unwrap()
        },
        |_| true,
    )
}

struct RelaxationRun {
    rate_error: f64,
    frames: usize,
    monotone: bool,
    final_entropy: f64,
}

/// OU relaxation from `N(2, 0.25)` towards its Boltzmann density.
fn relaxation_run(n: usize, dt: f64, spacing: f64, t_end: f64) -> RelaxationRun {
    let g = grid(n);
    let bar = ou().stationary_density(&g).unwrap().unwrap();
    let stride = (spacing / dt).round() as usize;
    let flow = fp_solve_strided(&ou(), &gaussian(&g, 2.0, 0.25).unwrap(), 0.0, t_end, dt, stride).unwrap();
    let d: Vec<f64> = flow.frames().iter().map(|f| relative_entropy(f, &bar).unwrap()).collect();
    let (rate_error, frames) = max_rate_error(
        &d,
        flow.dt(),
        |k| -relative_fisher(flow.frame(k), &bar).unwrap(),
        |k| d[k] >= kinematics::tol::RATE_MIN_ENTROPY,
    );
    RelaxationRun {
        rate_error,
        frames,
        monotone: d.windows(2).all(|w| w[1] - w[0] <= kinematics::tol::MONOTONE),
        final_entropy: *d.last().unwrap(),
    }
}

/// Two solutions of one OU equation approaching each other.
fn same_fp_run(n: usize, dt: f64, spacing: f64, t_end: f64) -> RelaxationRun {
    let g = grid(n);
    let stride = (spacing / dt).round() as usize;
    let ft = fp_solve_strided(&ou(), &gaussian(&g, 2.0, 0.25).unwrap(), 0.0, t_end, dt, stride).unwrap();
    let fr = fp_solve_strided(&ou(), &gaussian(&g, -1.0, 1.5).unwrap(), 0.0, t_end, dt, stride).unwrap();
    let d: Vec<f64> = (0..fr.len()).map(|k| relative_entropy(ft.frame(k), fr.frame(k)).unwrap()).collect();
    let (rate_error, frames) = max_rate_error(
        &d,
        fr.dt(),
        |k| same_fp_decay_rate(ft.frame(k), fr.frame(k), 2.0).unwrap(),
        |k| d[k] >= kinematics::tol::RATE_MIN_ENTROPY,
    );
    RelaxationRun {
        rate_error,
        frames,
        monotone: d.windows(2).all(|w| w[1] - w[0] <= kinematics::tol::MONOTONE),
        final_entropy: *d.last().unwrap(),
    }
}

fn opposite_fluxes() -> Outcome {
    let g = grid(401);
    let mut s = PairState::new(gaussian(&g, 0.5, 0.5).unwrap(), gaussian(&g, 0.0, 1.0).unwrap()).unwrap();
    let mut flux_gap = 0.0f64;
    let mut rate_gap = 0.0f64;
    for _ in 0..1000 {
        let (j1, j2) = fluxes(&s);
        let worst = j1.values().iter().zip(j2.values()).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        flux_gap = flux_gap.max(worst / j1.max_abs());
        let (a, b) = product_rates(&s);
        rate_gap = a.iter().zip(&b).map(|(x, y)| (x + y).abs()).fold(rate_gap, f64::max);
        s = product_flow_step(&s, 1e-5).unwrap();
    }
    outcome(
        flux_gap <= product_flow::tol::OPPOSITE_FLUX && rate_gap <= product_flow::tol::OPPOSITE_RATE,
        format!("max |J1+J2|/max|J1| = {flux_gap:.2e}, max |dρ̃/dt + dρ/dt| = {rate_gap:.2e} over 1000 steps"),
    )
}

fn reff_formula() -> Outcome {
    let run = reff_run(401, 1e-5, 1000, 2000);
    outcome(
        run.rate_error <= product_flow::tol::RATE_RELATIVE && run.dominated && run.frames > 10,
        format!(
            "max relative rate error {:.3e} over {} frames; reff <= same-FP rate at every frame: {}",
            run.rate_error, run.frames, run.dominated
        ),
    )
}

fn pt2006_formula() -> Outcome {
    let (err, frames) = pt2006_run(401, 1e-4, 0.01);
    outcome(err <= product_flow::tol::RATE_RELATIVE, format!("max relative rate error {err:.3e} over {frames} frames"))
}

fn fisher_dissipation() -> Outcome {
    let run = relaxation_run(401, 1e-4, 0.01, 8.0);
    outcome(
        run.rate_error <= kinematics::tol::RATE_RELATIVE
            && run.monotone
            && run.final_entropy <= kinematics::tol::RELAXED_ENTROPY,
        format!(
            "max relative rate error {:.3e} over {} frames; monotone: {}; D at t = 8: {:.3e}",
            run.rate_error, run.frames, run.monotone, run.final_entropy
        ),
    )
}

fn same_fp_decay() -> Outcome {
    let run = same_fp_run(401, 1e-4, 0.01, 4.0);
    outcome(
        run.rate_error <= kinematics::tol::RATE_RELATIVE && run.monotone,
        format!("max relative rate error {:.3e} over {} frames; monotone: {}", run.rate_error, run.frames, run.monotone),
    )
}

fn reverse_h_theorem() -> Outcome {
    let g = grid(401);
    let dt = 1e-4;
    let prior = fp_solve(&ou(), &gaussian(&g, 0.0, 2.0).unwrap(), 0.0, 1.0, dt).unwrap();
    let target = gaussian(&g, 1.0, 0.8).unwrap();
    let sol = half_bridge_final(&ou(), &prior, &target).unwrap();
    let d = sol.relative_entropy_series();
    let monotone = d.windows(2).all(|w| w[1] - w[0] >= -bridge::tol::MONOTONE);
    let terminal = (d.last().unwrap() - relative_entropy(&target, prior.last()).unwrap()).abs();
    let (err, frames) = max_rate_error(&d, dt, |k| bridge_entropy_rate(&sol, k, 2.0).unwrap(), |k| k % 100 == 0);
    outcome(
        monotone && terminal <= bridge::tol::TERMINAL_ENTROPY && err <= bridge::tol::RATE_RELATIVE,
        format!("nondecreasing: {monotone}; terminal gap {terminal:.2e}; max relative rate error {err:.3e} over {frames} frames"),
    )
}

fn gaussian_transport() -> Outcome {
    let g = Grid1D::new(-16.0, 16.0, 801).unwrap();
    let n01 = gaussian(&g, 0.0, 1.0).unwrap();
    let shift = (w2_distance(&n01, &gaussian(&g, 3.0, 1.0).unwrap()) - 3.0).abs();
    let wide = gaussian(&g, 0.0, 4.0).unwrap();
    let scale = (w2_distance(&n01, &wide) - 1.0).abs();
    let (a, b) = (gaussian(&g, -1.0, 0.5).unwrap(), gaussian(&g, 2.0, 1.5).unwrap());
    let total = w2_distance(&a, &b);
    let speed = (0..=10)
        .map(|k| {
            let t = k as f64 / 10.0;
            (w2_distance(&displacement_interpolate(&a, &b, t).unwrap(), &a) - t * total).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        shift <= 1e-4 && scale <= 1e-3 && speed <= transport::tol::CONSTANT_SPEED,
        format!("|W2 - 3| = {shift:.2e}; |W2 - 1| = {scale:.2e}; constant-speed gap {speed:.2e}"),
    )
}

fn benamou_brenier() -> Outcome {
    let g = grid(401);
    let (a, b) = (gaussian(&g, -1.0, 0.5).unwrap(), gaussian(&g, 2.0, 1.5).unwrap());
    let interp = DisplacementInterpolation::new(&a, &b);
    let (flow, velocities) = interp.flow(200).unwrap();
    let action = benamou_brenier_action(&flow, &velocities).unwrap();
    let w2sq = w2_distance(&a, &b).powi(2);
    let gap = (action - w2sq).abs() / w2sq;
    outcome(gap <= transport::tol::ACTION_RELATIVE, format!("action {action:.6} vs W2² {w2sq:.6}: relative gap {gap:.2e}"))
}

fn nelson_duality() -> Outcome {
    let g = grid(401);
    let dt = 1e-4;
    let relax = fp_solve(&ou(), &gaussian(&g, 2.0, 0.25).unwrap(), 0.0, 0.01, dt).unwrap();
    let ou_residual = backward_fp_residual(&relax, &ou());
    let heat = DiffusionSpec::heat(2.0).unwrap();
    let heat_flow = fp_solve(&heat, &gaussian(&g, 0.0, 1.0).unwrap(), 0.0, 0.01, dt).unwrap();
    let heat_residual = backward_fp_residual(&heat_flow, &heat);
    let rho = ou().stationary_density(&g).unwrap().unwrap();
    let frame = nelson_frame(&ou(), &rho, 0.0);
    let mut stationary = 0.0f64;
    for i in 0..g.len() {
        if g.x(i).abs() <= 4.0 {
            stationary = stationary
                .max((frame.b_minus.values()[i] + frame.b_plus.values()[i]).abs())
                .max(frame.v_current.values()[i].abs());
        }
    }
    outcome(
        ou_residual <= kinematics::tol::RESIDUAL && heat_residual <= kinematics::tol::RESIDUAL && stationary <= 1e-6,
        format!(
            "backward residual OU {ou_residual:.3e}, heat {heat_residual:.3e} (limit {:.0e}); stationary b- + b+, v: {stationary:.2e}",
            kinematics::tol::RESIDUAL
        ),
    )
}

fn boltzmann_fixed_point() -> Outcome {
    let g = grid(401);
    let h = Hamiltonian::quadratic(1.0, 0.0);
    let theta = Temperature::new(1.0).unwrap();
    let (bar, _) = boltzmann_density(&h, theta, &g).unwrap();
    let spec = DiffusionSpec::gradient_flow(h.clone(), theta);
    let flow = fp_solve_strided(&spec, &bar, 0.0, 1.0, 1e-4, 100).unwrap();
    let drift = flow
        .frames()
        .iter()
        .flat_map(|f| f.values().iter().zip(bar.values()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let perturbed = gaussian(&g, 0.7, 0.6).unwrap();
    let gap = free_energy_identity_gap(&h, &perturbed, theta).unwrap();
    outcome(
        drift <= kinematics::tol::STATIONARY && gap <= functionals::tol::FREE_ENERGY_IDENTITY,
        format!("max node drift over 10^4 steps {drift:.2e}; identity gap {gap:.2e}"),
    )
}

fn full_bridge() -> Outcome {
    let g = Grid1D::new(-6.0, 6.0, 241).unwrap();
    let heat = DiffusionSpec::heat(1.0).unwrap();
    let dt = 1e-2;
    let (a, b) = (gaussian(&g, -1.0, 0.5).unwrap(), gaussian(&g, 1.0, 0.5).unwrap());
    let (p0, p1) = (a.masses(), b.masses());
    let kernel = prior_kernel(&heat, &g, 0.0, 1.0, dt).unwrap();
    let system = match fortet_solve(&kernel, &p0, &p1, bridge::tol::FORTET, 5000) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("Fortet iteration failed: {e}")),
    };
    let (r0, r1) = system.marginal_errors(&p0, &p1);
    let flow = bridge_interpolation(&system, &heat, dt).unwrap();
    let l1 = |f: &DensityField, m: &[f64]| -> f64 { f.masses().iter().zip(m).map(|(x, y)| (x - y).abs()).sum() };
    let ends = l1(flow.first(), &p0).max(l1(flow.last(), &p1));

    let g = Grid1D::new(-5.0, 5.0, 201).unwrap();
    let (a, b) = (gaussian(&g, -1.0, 0.5).unwrap(), gaussian(&g, 1.0, 0.5).unwrap());
    let midpoint = displacement_interpolate(&a, &b, 0.5).unwrap();
    let gaps: Vec<f64> = [0.4, 0.2, 0.1, 0.05]
        .iter()
        .map(|&s2| {
            let prior = DiffusionSpec::heat(s2).unwrap();
            let k = prior_kernel(&prior, &g, 0.0, 1.0, dt).unwrap();
            let sys = fortet_solve(&k, &a.masses(), &b.masses(), bridge::tol::FORTET, bridge::tol::FORTET_MAX_ITER).unwrap();
            let flow: DensityFlow = bridge_interpolation(&sys, &prior, dt).unwrap();
            w2_distance(flow.frame(50), &midpoint)
        })
        .collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    outcome(
        r0.max(r1) <= bridge::tol::FORTET && ends <= bridge::tol::ENDPOINT && decreasing,
        format!(
            "{} Fortet sweeps, marginal errors {:.1e}/{:.1e}; endpoint L1 {ends:.1e}; W2 gaps {:?}",
            system.iterations,
            r0,
            r1,
            gaps.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn convergence_order() -> Outcome {
    // close frames keep the time-difference error well below the spatial one;
    // the product flow decays fastest and needs the closest
    let reff = (reff_run(401, 1e-6, 250, 2001).rate_error, reff_run(801, 1e-6, 250, 2001).rate_error);
    let pt = (pt2006_run(401, 1e-5, 1e-3).0, pt2006_run(801, 1e-5, 1e-3).0);
    let fisher = (relaxation_run(401, 1e-5, 1e-3, 2.0).rate_error, relaxation_run(801, 1e-5, 1e-3, 2.0).rate_error);
    let same = (same_fp_run(401, 1e-5, 1e-3, 2.0).rate_error, same_fp_run(801, 1e-5, 1e-3, 2.0).rate_error);
    let ratios = [reff.0 / reff.1, pt.0 / pt.1, fisher.0 / fisher.1, same.0 / same.1];
    let pass = ratios.iter().all(|r| (3.0..=5.0).contains(r));
    outcome(
        pass,
        format!(
            "error ratios under dx/2: reff {:.2}, pt2006 {:.2}, fisher {:.2}, same-FP {:.2}",
            ratios[0], ratios[1], ratios[2], ratios[3]
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("opposite fluxes", opposite_fluxes),
        ("product-flow entropy rate", reff_formula),
        ("entropy rate along two flows", pt2006_formula),
        ("free-energy dissipation", fisher_dissipation),
        ("same-equation decay", same_fp_decay),
        ("reverse-time H-theorem", reverse_h_theorem),
        ("Gaussian transport oracles", gaussian_transport),
        ("Benamou-Brenier action", benamou_brenier),
        ("Nelson duality", nelson_duality),
        ("Boltzmann fixed point", boltzmann_fixed_point),
        ("full bridge", full_bridge),
        ("second-order convergence", convergence_order),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict} {name}: {} [{:.1}s]", i + 1, o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("all {} criteria pass", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
