//! Executes scenarios and grades every formula check against the tolerance
//! declared by the library module that owns it.

use entroflow::bridge::{
    self, bridge_entropy_rate, bridge_interpolation, fortet_solve, half_bridge_final, half_bridge_initial,
    prior_kernel, ptcontr_rate, same_fp_decay_rate,
};
use entroflow::functionals::{entropy, relative_entropy, relative_fisher};
use entroflow::kinematics::{self, fp_solve, fp_solve_strided, DiffusionSpec};
use entroflow::product_flow::{self, fluxes, product_flow, reff_cross_term, reff_rate, PairState};
use entroflow::transport::{self, benamou_brenier_action, w2_distance, DisplacementInterpolation};
use entroflow::{DensityField, DensityFlow};
use serde::{Deserialize, Serialize};

use crate::config::{Kind, Scenario};
use crate::error::{CliError, Context};

/// One stored frame of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    pub t: f64,
    /// Relative entropy tracked by the scenario.
    pub d: Option<f64>,
    pub rate_predicted: Option<f64>,
    /// Centered difference of `d`; absent on the first and last frame.
    pub rate_measured: Option<f64>,
    pub fisher: Option<f64>,
    pub mass_tilde: Option<f64>,
    pub mass: Option<f64>,
    /// Values of [`Report::extra_columns`], in order.
    pub extra: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub residual: f64,
    pub tolerance: f64,
}

impl Verdict {
    /// Passes when `residual ≤ tolerance`; a NaN residual fails.
    pub fn at_most(name: &str, residual: f64, tolerance: f64) -> Self {
        Self { name: name.to_string(), pass: residual <= tolerance, residual, tolerance }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub kind: Kind,
    pub extra_columns: Vec<&'static str>,
    pub series: Vec<SeriesRecord>,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.pass)
    }
}

pub fn run_scenario(s: &Scenario) -> Result<Report, CliError> {
    log::info!("running {} on {} nodes, dt = {}", s.kind, s.grid.n, s.time.dt);
    let report = match s.kind {
        Kind::FpRelaxation => fp_relaxation(s),
        Kind::ProductFlow => steepest_product_flow(s),
        Kind::SameFpDecay => same_fp_decay(s),
        Kind::HalfBridgeInitial => initial_half_bridge(s),
        Kind::HalfBridgeFinal => final_half_bridge(s),
        Kind::FullBridge => full_bridge(s),
        Kind::OmtInterpolation => omt_interpolation(s),
    }?;
    for v in &report.verdicts {
        log::debug!("{}: residual {:e}, tolerance {:e}", v.name, v.residual, v.tolerance);
    }
    Ok(report)
}

/// Per-frame quantities collected before the measured rate is differenced.
struct Columns {
    t: Vec<f64>,
    d: Vec<f64>,
    predicted: Vec<Option<f64>>,
    fisher: Vec<Option<f64>>,
    mass_tilde: Vec<f64>,
    mass: Vec<f64>,
    extra: Vec<Vec<f64>>,
}

impl Columns {
    fn new() -> Self {
        Self {
            t: Vec::new(),
            d: Vec::new(),
            predicted: Vec::new(),
            fisher: Vec::new(),
            mass_tilde: Vec::new(),
            mass: Vec::new(),
            extra: Vec::new(),
        }
    }

    /// Rates are only kept where a centered difference exists.
    fn into_series(self) -> Vec<SeriesRecord> {
        let n = self.t.len();
        (0..n)
            .map(|k| {
                let interior = k > 0 && k + 1 < n;
                let measured = interior.then(|| (self.d[k + 1] - self.d[k - 1]) / (self.t[k + 1] - self.t[k - 1]));
                SeriesRecord {
                    t: self.t[k],
                    d: Some(self.d[k]),
                    rate_predicted: if interior { self.predicted[k] } else { None },
                    rate_measured: measured,
                    fisher: self.fisher[k],
                    mass_tilde: Some(self.mass_tilde[k]),
                    mass: Some(self.mass[k]),
                    extra: self.extra[k].clone(),
                }
            })
            .collect()
    }
}

/// Largest relative gap between measured and predicted rates over frames
/// whose entropy is at least `min_entropy`.
fn rate_verdict(name: &str, series: &[SeriesRecord], min_entropy: f64, tolerance: f64) -> Verdict {
    let worst = series
        .iter()
        .filter(|r| r.d.is_some_and(|d| d >= min_entropy))
        .filter_map(|r| Some((r.rate_measured? - r.rate_predicted?).abs() / r.rate_predicted?.abs()))
        .fold(0.0, f64::max);
    Verdict::at_most(name, worst, tolerance)
}

/// Largest step-to-step increase (`sign = 1`) or decrease (`sign = −1`).
fn monotone_verdict(name: &str, d: &[f64], sign: f64, tolerance: f64) -> Verdict {
    let worst = d.windows(2).map(|w| sign * (w[1] - w[0])).fold(0.0, f64::max);
    Verdict::at_most(name, worst, tolerance)
}

fn max_mass_error(masses: &[f64]) -> f64 {
    masses.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max)
}

fn max_node_gap(a: &DensityField, b: &DensityField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn prior(s: &Scenario) -> Result<DiffusionSpec, CliError> {
    s.prior.diffusion().context(|| "prior".into())
}

fn density(s: &Scenario, which: &str) -> Result<DensityField, CliError> {
    let spec = match which {
        "initial" => &s.initial,
        "reference" => &s.reference,
        _ => &s.target,
    };
    let spec = spec.as_ref().expect("validated scenario carries every density its kind needs");
    spec.build(&s.grid()).context(|| format!("{which} density"))
}

/// Every `stride`-th frame of a full-resolution flow.
fn every(flow: &DensityFlow, stride: usize) -> impl Iterator<Item = usize> + '_ {
    (0..flow.len()).step_by(stride)
}

fn fp_relaxation(s: &Scenario) -> Result<Report, CliError> {
    let spec = prior(s)?;
    let grid = s.grid();
    let bar = spec
        .stationary_density(&grid)
        .expect("validated prior has an equilibrium")
        .context(|| "stationary density".into())?;
    let flow = fp_solve_strided(&spec, &density(s, "initial")?, s.time.t0, s.time.t1, s.time.dt, s.time.stride)
        .context(|| "Fokker-Planck solve".into())?;
    let mut c = Columns::new();
    let mut lowest = f64::INFINITY;
    for (k, rho) in flow.frames().iter().enumerate() {
        c.t.push(flow.time(k));
        c.d.push(relative_entropy(rho, &bar).context(|| format!("entropy at frame {k}"))?);
        c.fisher.push(Some(relative_fisher(rho, &bar).context(|| format!("Fisher information at frame {k}"))?));
        c.predicted.push(Some(same_fp_decay_rate(rho, &bar, spec.sigma2()).context(|| format!("rate at frame {k}"))?));
        c.mass_tilde.push(rho.mass());
        c.mass.push(bar.mass());
        c.extra.push(vec![rho.mean(), rho.variance()]);
        lowest = rho.values().iter().fold(lowest, |m, &v| m.min(v));
    }
    let verdicts = vec![
        Verdict::at_most("mass", max_mass_error(&c.mass_tilde), kinematics::tol::MASS),
        Verdict::at_most("positivity", (-lowest).max(0.0), -kinematics::tol::NEGATIVITY),
        monotone_verdict("monotone", &c.d, 1.0, kinematics::tol::MONOTONE),
        Verdict::at_most("boltzmann-limit", *c.d.last().expect("nonempty flow"), kinematics::tol::RELAXED_ENTROPY),
    ];
    finish(s.kind, vec!["mean", "variance"], c, verdicts, |series| {
        Some(rate_verdict("fe-dissipation", series, kinematics::tol::RATE_MIN_ENTROPY, kinematics::tol::RATE_RELATIVE))
    })
}

fn steepest_product_flow(s: &Scenario) -> Result<Report, CliError> {
    let pair = PairState::new(density(s, "initial")?, density(s, "reference")?).context(|| "density pair".into())?;
    let traj = product_flow(&pair, s.time.dt, s.time.steps(), s.time.stride).context(|| "product flow".into())?;
    let sigma2 = s.prior.sigma2;
    let h = s.time.dt * s.time.stride as f64;
    let mut c = Columns::new();
    let mut flux_gap = 0.0f64;
    for k in 0..traj.len() {
        let st = traj.state(k);
        let fisher = relative_fisher(&st.rho_tilde, &st.rho).context(|| format!("Fisher information at frame {k}"))?;
        c.t.push(s.time.t0 + k as f64 * h);
        c.d.push(st.relative_entropy());
        c.fisher.push(Some(fisher));
        c.predicted.push(Some(reff_rate(&st)));
        c.mass_tilde.push(st.rho_tilde.mass());
        c.mass.push(st.rho.mass());
        c.extra.push(vec![reff_cross_term(&st), -0.5 * sigma2 * fisher]);
        let (j1, j2) = fluxes(&st);
        let scale = j1.max_abs();
        if scale > 0.0 {
            let gap = j1.values().iter().zip(j2.values()).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            flux_gap = flux_gap.max(gap / scale);
        }
    }
    let drift = |m: &[f64]| m.iter().map(|x| (x - m[0]).abs()).fold(0.0, f64::max);
    let verdicts = vec![
        Verdict::at_most("opposite-flux", flux_gap, product_flow::tol::OPPOSITE_FLUX),
        Verdict::at_most("mass", drift(&c.mass_tilde).max(drift(&c.mass)), product_flow::tol::SUM_DRIFT),
        monotone_verdict("lyapunov", &c.d, 1.0, product_flow::tol::MONOTONE),
    ];
    finish(s.kind, vec!["cross_term", "same_fp_rate"], c, verdicts, |series| {
        Some(rate_verdict("reff-match", series, product_flow::tol::RATE_MIN_ENTROPY, product_flow::tol::RATE_RELATIVE))
    })
}

fn same_fp_decay(s: &Scenario) -> Result<Report, CliError> {
    let spec = prior(s)?;
    let solve = |which: &str| -> Result<DensityFlow, CliError> {
        fp_solve_strided(&spec, &density(s, which)?, s.time.t0, s.time.t1, s.time.dt, s.time.stride)
            .context(|| format!("Fokker-Planck solve from the {which} density"))
    };
    let (tilde, rho) = (solve("initial")?, solve("reference")?);
    let mut c = Columns::new();
    for k in 0..rho.len() {
        let (a, b) = (tilde.frame(k), rho.frame(k));
        c.t.push(rho.time(k));
        c.d.push(relative_entropy(a, b).context(|| format!("entropy at frame {k}"))?);
        c.fisher.push(Some(relative_fisher(a, b).context(|| format!("Fisher information at frame {k}"))?));
        c.predicted.push(Some(same_fp_decay_rate(a, b, spec.sigma2()).context(|| format!("rate at frame {k}"))?));
        c.mass_tilde.push(a.mass());
        c.mass.push(b.mass());
        c.extra.push(Vec::new());
    }
    let verdicts = vec![
        Verdict::at_most("mass", max_mass_error(&c.mass_tilde).max(max_mass_error(&c.mass)), kinematics::tol::MASS),
        monotone_verdict("monotone", &c.d, 1.0, kinematics::tol::MONOTONE),
    ];
    finish(s.kind, Vec::new(), c, verdicts, |series| {
        Some(rate_verdict("decay-rate", series, kinematics::tol::RATE_MIN_ENTROPY, kinematics::tol::RATE_RELATIVE))
    })
}

fn initial_half_bridge(s: &Scenario) -> Result<Report, CliError> {
    let spec = prior(s)?;
    let prior_flow = fp_solve(&spec, &density(s, "reference")?, s.time.t0, s.time.t1, s.time.dt)
        .context(|| "prior Fokker-Planck solve".into())?;
    let sol = half_bridge_initial(&spec, &prior_flow, &density(s, "initial")?).context(|| "half bridge".into())?;
    let mut c = Columns::new();
    for k in every(&prior_flow, s.time.stride) {
        let (a, b) = (sol.controlled_flow.frame(k), prior_flow.frame(k));
        let u = sol.control_at(k);
        c.t.push(prior_flow.time(k));
        c.d.push(relative_entropy(a, b).context(|| format!("entropy at frame {k}"))?);
        c.fisher.push(Some(relative_fisher(a, b).context(|| format!("Fisher information at frame {k}"))?));
        c.predicted.push(Some(ptcontr_rate(a, b, &u, spec.sigma2()).context(|| format!("rate at frame {k}"))?));
        c.mass_tilde.push(a.mass());
        c.mass.push(b.mass());
        c.extra.push(vec![u.max_abs()]);
    }
    let verdicts = vec![
        Verdict::at_most("mass", max_mass_error(&c.mass_tilde).max(max_mass_error(&c.mass)), kinematics::tol::MASS),
        monotone_verdict("monotone", &c.d, 1.0, bridge::tol::MONOTONE),
    ];
    finish(s.kind, vec!["control_max"], c, verdicts, |series| {
        Some(rate_verdict("decay-rate", series, bridge::tol::RATE_MIN_ENTROPY, bridge::tol::RATE_RELATIVE))
    })
}

fn final_half_bridge(s: &Scenario) -> Result<Report, CliError> {
    let spec = prior(s)?;
    let prior_flow = fp_solve(&spec, &density(s, "reference")?, s.time.t0, s.time.t1, s.time.dt)
        .context(|| "prior Fokker-Planck solve".into())?;
    let target = density(s, "target")?;
    let sol = half_bridge_final(&spec, &prior_flow, &target).context(|| "half bridge".into())?;
    let d_all = sol.relative_entropy_series();
    let mut c = Columns::new();
    for k in every(&prior_flow, s.time.stride) {
        let (a, b) = (sol.controlled_flow.frame(k), prior_flow.frame(k));
        c.t.push(prior_flow.time(k));
        c.d.push(d_all[k]);
        c.fisher.push(Some(relative_fisher(a, b).context(|| format!("Fisher information at frame {k}"))?));
        c.predicted.push(Some(bridge_entropy_rate(&sol, k, spec.sigma2()).context(|| format!("rate at frame {k}"))?));
        c.mass_tilde.push(a.mass());
        c.mass.push(b.mass());
        c.extra.push(vec![sol.control_at(k).max_abs()]);
    }
    let terminal = relative_entropy(&target, prior_flow.last()).context(|| "terminal entropy".into())?;
    let verdicts = vec![
        monotone_verdict("h-theorem", &d_all, -1.0, bridge::tol::MONOTONE),
        Verdict::at_most("terminal-entropy", (d_all[d_all.len() - 1] - terminal).abs(), bridge::tol::TERMINAL_ENTROPY),
        Verdict::at_most(
            "terminal-density",
            max_node_gap(sol.controlled_flow.last(), &target),
            bridge::tol::TERMINAL_DENSITY,
        ),
        Verdict::at_most("martingale", sol.martingale_drift(), bridge::tol::MARTINGALE),
    ];
    finish(s.kind, vec!["control_max"], c, verdicts, |series| {
        Some(rate_verdict("entropy-rate", series, bridge::tol::RATE_MIN_ENTROPY, bridge::tol::RATE_RELATIVE))
    })
}

fn full_bridge(s: &Scenario) -> Result<Report, CliError> {
    let spec = prior(s)?;
    let grid = s.grid();
    let (p0, p1) = (density(s, "initial")?, density(s, "target")?);
    let (m0, m1) = (p0.masses(), p1.masses());
    let kernel = prior_kernel(&spec, &grid, s.time.t0, s.time.t1, s.time.dt).context(|| "prior kernel".into())?;
    let system = fortet_solve(&kernel, &m0, &m1, bridge::tol::FORTET, s.max_iter).context(|| "Fortet iteration".into())?;
    log::info!("Fortet converged after {} sweeps", system.iterations);
    let (r0, r1) = system.marginal_errors(&m0, &m1);
    let flow = bridge_interpolation(&system, &spec, s.time.dt).context(|| "entropic interpolation".into())?;
    let prior_flow =
        fp_solve(&spec, &p0, s.time.t0, s.time.t1, s.time.dt).context(|| "prior Fokker-Planck solve".into())?;
    let displacement = DisplacementInterpolation::new(&p0, &p1);
    let span = s.time.t1 - s.time.t0;
    let mut c = Columns::new();
    for k in every(&flow, s.time.stride) {
        let rho = flow.frame(k);
        let t = flow.time(k);
        let mu = displacement.density((t - s.time.t0) / span).context(|| format!("displacement frame {k}"))?;
        c.t.push(t);
        c.d.push(relative_entropy(rho, prior_flow.frame(k)).context(|| format!("entropy at frame {k}"))?);
        c.fisher.push(None);
        c.predicted.push(None);
        c.mass_tilde.push(rho.mass());
        c.mass.push(prior_flow.frame(k).mass());
        c.extra.push(vec![w2_distance(rho, &mu)]);
    }
    let l1 = |f: &DensityField, m: &[f64]| -> f64 { f.masses().iter().zip(m).map(|(x, y)| (x - y).abs()).sum() };
    let masses: Vec<f64> = flow.frames().iter().map(DensityField::mass).collect();
    let verdicts = vec![
        Verdict::at_most("fortet-marginals", r0.max(r1), bridge::tol::FORTET),
        monotone_verdict("fortet-monotone", &system.residual_history, 1.0, bridge::tol::MONOTONE),
        Verdict::at_most("endpoints", l1(flow.first(), &m0).max(l1(flow.last(), &m1)), bridge::tol::ENDPOINT),
        Verdict::at_most("mass", max_mass_error(&masses), bridge::tol::INTERPOLATION_MASS),
    ];
    finish(s.kind, vec!["w2_to_displacement"], c, verdicts, |_| None)
}

fn omt_interpolation(s: &Scenario) -> Result<Report, CliError> {
    let (nu0, nu1) = (density(s, "initial")?, density(s, "target")?);
    let interp = DisplacementInterpolation::new(&nu0, &nu1);
    let (flow, velocities) = interp.flow(s.time.steps()).context(|| "displacement interpolation".into())?;
    let action = benamou_brenier_action(&flow, &velocities).context(|| "Benamou-Brenier action".into())?;
    let total = w2_distance(&nu0, &nu1);
    let mut series = Vec::new();
    let mut speed_gap = 0.0f64;
    for k in every(&flow, s.time.stride) {
        let mu = flow.frame(k);
        let t = flow.time(k);
        let from_start = w2_distance(mu, &nu0);
        speed_gap = speed_gap.max((from_start - t * total).abs());
        series.push(SeriesRecord {
            t,
            d: None,
            rate_predicted: None,
            rate_measured: None,
            fisher: None,
            mass_tilde: None,
            mass: Some(mu.mass()),
            extra: vec![from_start, w2_distance(mu, &nu1), entropy(mu)],
        });
    }
    let endpoint = max_node_gap(flow.first(), &nu0).max(max_node_gap(flow.last(), &nu1));
    let action_gap = if total > 0.0 { (action - total * total).abs() / (total * total) } else { action.abs() };
    Ok(Report {
        kind: s.kind,
        extra_columns: vec!["w2_from_start", "w2_to_end", "entropy"],
        series,
        verdicts: vec![
            Verdict::at_most("constant-speed", speed_gap, transport::tol::CONSTANT_SPEED),
            Verdict::at_most("action", action_gap, transport::tol::ACTION_RELATIVE),
            Verdict::at_most("endpoints", endpoint, transport::tol::INTERPOLATION_ENDPOINT),
        ],
    })
}

fn finish(
    kind: Kind,
    extra_columns: Vec<&'static str>,
    columns: Columns,
    mut verdicts: Vec<Verdict>,
    rate: impl FnOnce(&[SeriesRecord]) -> Option<Verdict>,
) -> Result<Report, CliError> {
    let series = columns.into_series();
    verdicts.extend(rate(&series));
    Ok(Report { kind, extra_columns, series, verdicts })
}
