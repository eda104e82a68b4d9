//! Scenario documents: parsing, defaults and validation.
//!
//! TOML and JSON documents are both read into a JSON value tree and walked by
//! hand, so that every problem in a document is reported at once, each with
//! the dotted path of the offending field.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use entroflow::densities::{self, Component};
use entroflow::functionals::Hamiltonian;
use entroflow::kinematics::{DiffusionSpec, DriftField};
use entroflow::product_flow::{stable_dt, PairState};
use entroflow::{DensityField, Grid1D};
use serde_json::{Map, Value};

use crate::error::{CliError, FieldError};

pub const DEFAULT_NODES: usize = 401;
pub const DEFAULT_DOMAIN: (f64, f64) = (-8.0, 8.0);
pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_STRIDE: usize = 100;

/// The experiment a scenario runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    FpRelaxation,
    ProductFlow,
    SameFpDecay,
    HalfBridgeInitial,
    HalfBridgeFinal,
    FullBridge,
    OmtInterpolation,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::FpRelaxation,
        Kind::ProductFlow,
        Kind::SameFpDecay,
        Kind::HalfBridgeInitial,
        Kind::HalfBridgeFinal,
        Kind::FullBridge,
        Kind::OmtInterpolation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::FpRelaxation => "fp-relaxation",
            Kind::ProductFlow => "product-flow",
            Kind::SameFpDecay => "same-fp-decay",
            Kind::HalfBridgeInitial => "half-bridge-initial",
            Kind::HalfBridgeFinal => "half-bridge-final",
            Kind::FullBridge => "full-bridge",
            Kind::OmtInterpolation => "omt-interpolation",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Which of `initial`, `reference`, `target` the kind reads.
    fn densities(self) -> [bool; 3] {
        match self {
            Kind::FpRelaxation => [true, false, false],
            Kind::ProductFlow | Kind::SameFpDecay | Kind::HalfBridgeInitial => [true, true, false],
            Kind::HalfBridgeFinal => [false, true, true],
            Kind::FullBridge | Kind::OmtInterpolation => [true, false, true],
        }
    }

    fn default_t1(self) -> f64 {
        match self {
            Kind::FpRelaxation => 8.0,
            Kind::SameFpDecay => 4.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A named density family.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec {
    Gaussian { mean: f64, var: f64 },
    Mixture(Vec<Component>),
    Uniform { a: f64, b: f64 },
}

impl DensitySpec {
    pub fn build(&self, grid: &Grid1D) -> entroflow::Result<DensityField> {
        match self {
            DensitySpec::Gaussian { mean, var } => densities::gaussian(grid, *mean, *var),
            DensitySpec::Mixture(c) => densities::mixture(grid, c),
            DensitySpec::Uniform { a, b } => densities::uniform(grid, *a, *b),
        }
    }
}

/// A named prior drift.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSpec {
    Zero,
    Constant { value: f64 },
    Ou { rate: f64, center: f64 },
    DoubleWell { theta: f64 },
}

impl DriftSpec {
    fn field(&self) -> DriftField {
        match self {
            DriftSpec::Zero => DriftField::Zero,
            DriftSpec::Constant { value } => DriftField::Constant(*value),
            DriftSpec::Ou { rate, center } => DriftField::Ou { center: *center, rate: *rate },
            DriftSpec::DoubleWell { theta } => DriftField::Gradient { h: Hamiltonian::double_well(), theta: *theta },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub drift: DriftSpec,
    pub sigma2: f64,
}

impl PriorSpec {
    pub fn diffusion(&self) -> entroflow::Result<DiffusionSpec> {
        DiffusionSpec::new(self.drift.field(), self.sigma2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpec {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    /// Solver steps between stored frames.
    pub stride: usize,
}

impl TimeSpec {
    pub fn steps(&self) -> usize {
        ((self.t1 - self.t0) / self.dt).round() as usize
    }
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: Kind,
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub prior: PriorSpec,
    pub initial: Option<DensitySpec>,
    pub reference: Option<DensitySpec>,
    pub target: Option<DensitySpec>,
    /// Fortet iteration budget of a full bridge.
    pub max_iter: usize,
    pub output: Option<PathBuf>,
}

impl Scenario {
    pub fn grid(&self) -> Grid1D {
        Grid1D::new(self.grid.x_min, self.grid.x_max, self.grid.n).expect("validated grid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    /// Picks the format from a file extension; anything but `.json` is TOML.
    pub fn sniff(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_scenario(&text, Format::sniff(path))
}

pub fn parse_scenario(text: &str, format: Format) -> Result<Scenario, CliError> {
    let doc: Value = match format {
        Format::Json => serde_json::from_str(text).map_err(|e| CliError::Syntax(e.to_string()))?,
        Format::Toml => {
            let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Syntax(e.to_string()))?;
            serde_json::to_value(table).map_err(|e| CliError::Syntax(e.to_string()))?
        }
    };
    let mut errors = Vec::new();
    let scenario = validate(&doc, &mut errors);
    match scenario {
        Some(s) if errors.is_empty() => Ok(s),
        _ => Err(CliError::Config(errors)),
    }
}

/// A table being read, remembering which keys were consumed.
struct Section<'a> {
    path: String,
    map: Option<&'a Map<String, Value>>,
    seen: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn root(value: &'a Value, errors: &mut Vec<FieldError>) -> Self {
        let map = value.as_object();
        if map.is_none() {
            errors.push(FieldError::new("", "document must be a table"));
        }
        Section { path: String::new(), map, seen: BTreeSet::new() }
    }

    fn field_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.insert(key);
        self.map.and_then(|m| m.get(key))
    }

    fn has(&self, key: &str) -> bool {
        self.map.is_some_and(|m| m.contains_key(key))
    }

    fn sub(&mut self, key: &'static str, errors: &mut Vec<FieldError>) -> Option<Section<'a>> {
        let path = self.field_path(key);
        match self.get(key)? {
            Value::Object(map) => Some(Section { path, map: Some(map), seen: BTreeSet::new() }),
            _ => {
                errors.push(FieldError::new(path, "expected a table"));
                None
            }
        }
    }

    fn f64(&mut self, key: &'static str, default: Option<f64>, errors: &mut Vec<FieldError>) -> Option<f64> {
        let path = self.field_path(key);
        match self.get(key) {
            None => {
                if default.is_none() {
                    errors.push(FieldError::new(path, "missing required number"));
                }
                default
            }
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => Some(x),
                Some(x) => {
                    errors.push(FieldError::new(path, format!("must be finite, got {x}")));
                    None
                }
                None => {
                    errors.push(FieldError::new(path, format!("expected a number, got {v}")));
                    None
                }
            },
        }
    }

    fn positive(&mut self, key: &'static str, default: Option<f64>, errors: &mut Vec<FieldError>) -> Option<f64> {
        let x = self.f64(key, default, errors)?;
        if x > 0.0 {
            Some(x)
        } else {
            errors.push(FieldError::new(self.field_path(key), format!("must be positive, got {x}")));
            None
        }
    }

    fn count(&mut self, key: &'static str, default: usize, errors: &mut Vec<FieldError>) -> Option<usize> {
        let path = self.field_path(key);
        match self.get(key) {
            None => Some(default),
            Some(v) => match v.as_u64() {
                Some(n) if n > 0 => Some(n as usize),
                _ => {
                    errors.push(FieldError::new(path, format!("expected a positive integer, got {v}")));
                    None
                }
            },
        }
    }

    fn string(&mut self, key: &'static str, errors: &mut Vec<FieldError>) -> Option<&'a str> {
        let path = self.field_path(key);
        match self.get(key) {
            None => {
                errors.push(FieldError::new(path, "missing required string"));
                None
            }
            Some(Value::String(s)) => Some(s),
            Some(v) => {
                errors.push(FieldError::new(path, format!("expected a string, got {v}")));
                None
            }
        }
    }

    /// Reports every key that no reader asked for.
    fn finish(self, errors: &mut Vec<FieldError>) {
        if let Some(map) = self.map {
            for key in map.keys() {
                if !self.seen.contains(key.as_str()) {
                    errors.push(FieldError::new(self.field_path(key), "unknown field"));
                }
            }
        }
    }
}

fn validate(doc: &Value, errors: &mut Vec<FieldError>) -> Option<Scenario> {
    let mut root = Section::root(doc, errors);
    let kind = root.string("kind", errors).and_then(|name| {
        let kind = Kind::from_name(name);
        if kind.is_none() {
            let known: Vec<_> = Kind::ALL.iter().map(|k| k.name()).collect();
            errors.push(FieldError::new("kind", format!("unknown kind `{name}`; expected one of {}", known.join(", "))));
        }
        kind
    });

    let grid = match root.sub("grid", errors) {
        Some(mut s) => {
            let n = s.count("n", DEFAULT_NODES, errors);
            let x_min = s.f64("x_min", Some(DEFAULT_DOMAIN.0), errors);
            let x_max = s.f64("x_max", Some(DEFAULT_DOMAIN.1), errors);
            s.finish(errors);
            match (n, x_min, x_max) {
                (Some(n), Some(x_min), Some(x_max)) => Some(GridSpec { n, x_min, x_max }),
                _ => None,
            }
        }
        None => Some(GridSpec { n: DEFAULT_NODES, x_min: DEFAULT_DOMAIN.0, x_max: DEFAULT_DOMAIN.1 }),
    };
    let grid = grid.and_then(|g| match Grid1D::new(g.x_min, g.x_max, g.n) {
        Ok(_) => Some(g),
        Err(e) => {
            errors.push(FieldError::new("grid", e.to_string()));
            None
        }
    });

    let default_t1 = kind.map_or(1.0, Kind::default_t1);
    let time = {
        let mut s = root.sub("time", errors);
        let (t0, t1, dt, stride) = match s.as_mut() {
            Some(s) => (
                s.f64("t0", Some(0.0), errors),
                s.f64("t1", Some(default_t1), errors),
                s.positive("dt", Some(DEFAULT_DT), errors),
                s.count("stride", DEFAULT_STRIDE, errors),
            ),
            None => (Some(0.0), Some(default_t1), Some(DEFAULT_DT), Some(DEFAULT_STRIDE)),
        };
        if let Some(s) = s {
            s.finish(errors);
        }
        match (t0, t1, dt, stride) {
            (Some(t0), Some(t1), Some(dt), Some(stride)) => check_time(TimeSpec { t0, t1, dt, stride }, kind, errors),
            _ => None,
        }
    };

    let prior = match root.sub("prior", errors) {
        Some(s) => parse_prior(s, errors),
        None => Some(PriorSpec { drift: DriftSpec::Ou { rate: 1.0, center: 0.0 }, sigma2: 2.0 }),
    };

    let mut densities: [Option<DensitySpec>; 3] = [None, None, None];
    let names: [&'static str; 3] = ["initial", "reference", "target"];
    let wanted = kind.map(Kind::densities);
    for (slot, (name, want)) in densities.iter_mut().zip(names.iter().zip(wanted.unwrap_or([true; 3]))) {
        let present = root.has(name);
        match (present, want) {
            (true, true) => *slot = root.sub(name, errors).and_then(|s| parse_density(s, errors)),
            (true, false) => {
                root.get(name);
                errors.push(FieldError::new(*name, format!("not used by kind {}", kind.expect("kind known"))));
            }
            (false, true) if kind.is_some() => {
                errors.push(FieldError::new(*name, format!("required by kind {}", kind.expect("kind known"))));
            }
            _ => {}
        }
    }

    let max_iter = {
        let n = root.count("max_iter", entroflow::bridge::tol::FORTET_MAX_ITER, errors);
        if root.has("max_iter") && kind.is_some_and(|k| k != Kind::FullBridge) {
            errors.push(FieldError::new("max_iter", "only used by kind full-bridge"));
        }
        n
    };
    let output = match root.get("output") {
        None => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(v) => {
            errors.push(FieldError::new("output", format!("expected a path string, got {v}")));
            None
        }
    };
    root.finish(errors);

    let [initial, reference, target] = densities;
    let scenario = Scenario {
        kind: kind?,
        grid: grid?,
        time: time?,
        prior: prior?,
        initial,
        reference,
        target,
        max_iter: max_iter?,
        output,
    };
    if errors.is_empty() {
        check_built(&scenario, errors);
    }
    Some(scenario)
}

fn check_time(t: TimeSpec, kind: Option<Kind>, errors: &mut Vec<FieldError>) -> Option<TimeSpec> {
    let before = errors.len();
    if !(t.t1 > t.t0) {
        errors.push(FieldError::new("time.t1", format!("must exceed time.t0 = {}, got {}", t.t0, t.t1)));
    } else {
        let steps = ((t.t1 - t.t0) / t.dt).round();
        if steps < 1.0 || (steps * t.dt - (t.t1 - t.t0)).abs() > 1e-6 * t.dt * steps.max(1.0) {
            errors.push(FieldError::new("time.dt", format!("{} does not divide the window [{}, {}]", t.dt, t.t0, t.t1)));
        } else if steps as usize % t.stride != 0 {
            errors.push(FieldError::new("time.stride", format!("{} does not divide the {} steps", t.stride, steps)));
        } else if steps as usize / t.stride < 2 {
            errors.push(FieldError::new("time.stride", "fewer than three frames would be stored"));
        }
    }
    if kind == Some(Kind::OmtInterpolation) && (t.t0 != 0.0 || t.t1 != 1.0) {
        errors.push(FieldError::new("time", "omt-interpolation runs on the window [0, 1]"));
    }
    (errors.len() == before).then_some(t)
}

fn parse_prior(mut s: Section<'_>, errors: &mut Vec<FieldError>) -> Option<PriorSpec> {
    let sigma2 = s.positive("sigma2", Some(2.0), errors);
    let drift = match s.string("drift", errors)? {
        "zero" | "heat" => Some(DriftSpec::Zero),
        "constant" => s.f64("value", None, errors).map(|value| DriftSpec::Constant { value }),
        "ou" => {
            let rate = s.positive("rate", Some(1.0), errors);
            let center = s.f64("center", Some(0.0), errors);
            rate.zip(center).map(|(rate, center)| DriftSpec::Ou { rate, center })
        }
        "double-well" => s.positive("theta", Some(1.0), errors).map(|theta| DriftSpec::DoubleWell { theta }),
        other => {
            errors.push(FieldError::new(
                s.field_path("drift"),
                format!("unknown drift `{other}`; expected zero, heat, constant, ou or double-well"),
            ));
            None
        }
    };
    s.finish(errors);
    Some(PriorSpec { drift: drift?, sigma2: sigma2? })
}

fn parse_density(mut s: Section<'_>, errors: &mut Vec<FieldError>) -> Option<DensitySpec> {
    let spec = match s.string("family", errors)? {
        "gaussian" => {
            let mean = s.f64("mean", None, errors);
            let var = s.positive("var", None, errors);
            Some(DensitySpec::Gaussian { mean: mean?, var: var? })
        }
        "uniform" => {
            let a = s.f64("a", None, errors);
            let b = s.f64("b", None, errors);
            match (a, b) {
                (Some(a), Some(b)) if a < b => Some(DensitySpec::Uniform { a, b }),
                (Some(a), Some(b)) => {
                    errors.push(FieldError::new(s.field_path("b"), format!("must exceed a = {a}, got {b}")));
                    None
                }
                _ => None,
            }
        }
        "mixture" => {
            let path = s.field_path("components");
            match s.get("components") {
                Some(Value::Array(items)) if !items.is_empty() => {
                    let mut comps = Vec::new();
                    for (i, item) in items.iter().enumerate() {
                        let mut c = Section {
                            path: format!("{path}[{i}]"),
                            map: item.as_object(),
                            seen: BTreeSet::new(),
                        };
                        if c.map.is_none() {
                            errors.push(FieldError::new(c.path.clone(), "expected a table"));
                            continue;
                        }
                        let weight = c.positive("weight", None, errors);
                        let mean = c.f64("mean", None, errors);
                        let var = c.positive("var", None, errors);
                        c.finish(errors);
                        if let (Some(weight), Some(mean), Some(var)) = (weight, mean, var) {
                            comps.push(Component { weight, mean, var });
                        }
                    }
                    (comps.len() == items.len()).then_some(DensitySpec::Mixture(comps))
                }
                _ => {
                    errors.push(FieldError::new(path, "expected a nonempty array of components"));
                    None
                }
            }
        }
        other => {
            errors.push(FieldError::new(
                s.field_path("family"),
                format!("unknown family `{other}`; expected gaussian, mixture or uniform"),
            ));
            None
        }
    };
    s.finish(errors);
    spec
}

/// Checks that need the grid: densities that fit, and the step bound.
fn check_built(s: &Scenario, errors: &mut Vec<FieldError>) {
    let grid = s.grid();
    let mut built = [None, None, None];
    for (slot, (name, spec)) in
        built.iter_mut().zip([("initial", &s.initial), ("reference", &s.reference), ("target", &s.target)])
    {
        if let Some(spec) = spec {
            match spec.build(&grid) {
                Ok(d) => *slot = Some(d),
                Err(e) => errors.push(FieldError::new(name, e.to_string())),
            }
        }
    }
    let spec = match s.prior.diffusion() {
        Ok(spec) => spec,
        Err(e) => {
            errors.push(FieldError::new("prior", e.to_string()));
            return;
        }
    };
    match s.kind {
        Kind::ProductFlow => {
            if let [Some(a), Some(b), _] = &built {
                if let Ok(pair) = PairState::new(a.clone(), b.clone()) {
                    let bound = stable_dt(&pair);
                    if s.time.dt > bound {
                        errors.push(FieldError::new(
                            "time.dt",
                            format!("{} exceeds the stability bound {bound:.6e} of the product flow", s.time.dt),
                        ));
                    }
                }
            }
        }
        Kind::OmtInterpolation => {}
        _ => {
            let bound = spec.stability_bound(&grid, s.time.t0);
            if s.time.dt > bound {
                errors.push(FieldError::new(
                    "time.dt",
                    format!("{} exceeds the stability bound {bound:.6e} = dx / (2 max|b|)", s.time.dt),
                ));
            }
            if s.kind == Kind::FpRelaxation && spec.equilibrium().is_none() {
                errors.push(FieldError::new("prior.drift", "fp-relaxation needs a prior with a stationary density"));
            }
        }
    }
}
