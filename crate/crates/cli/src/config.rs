//! Scenario configuration: schema checks, typed form and unit conversion.

use std::collections::BTreeSet;
use std::fmt;

use packetscat::amplitudes::AmplitudeModel;
use packetscat::correction::ScatteringScenario;
use packetscat::kinematics::{kev_to_mev, nm_to_natural};
use packetscat::oracle::OracleConfig;
use packetscat::packets::{make_packet, CatComponent, PacketSpec, RelativeState, ShapeSpec};
use packetscat::wigner::PhaseSpaceGrid;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u64 = 1;

/// One schema violation, located by a JSON path such as
/// `particles[0].packet.sigma[1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Units {
    #[default]
    #[serde(rename = "natural")]
    Natural,
    /// Lengths in nm, masses and momenta in keV.
    #[serde(rename = "nm-keV")]
    NmKev,
}

impl Units {
    pub fn length(self, x: f64) -> f64 {
        match self {
            Units::Natural => x,
            Units::NmKev => nm_to_natural(x),
        }
    }

    pub fn momentum(self, p: f64) -> f64 {
        match self {
            Units::Natural => p,
            Units::NmKev => kev_to_mev(p),
        }
    }

    fn lengths(self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|&x| self.length(x)).collect()
    }

    fn momenta(self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|&x| self.momentum(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketConfig {
    pub dim: usize,
    #[serde(default)]
    pub mean_p: Vec<f64>,
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma_x: Option<Vec<f64>>,
    #[serde(default)]
    pub shift_b: Vec<f64>,
    #[serde(flatten)]
    pub shape: ShapeSpec,
}

impl PacketConfig {
    /// Packet description in natural units.
    pub fn to_spec(&self, units: Units) -> PacketSpec {
        let dim = self.dim;
        let or_zero = |v: &[f64]| if v.is_empty() { vec![0.0; dim] } else { v.to_vec() };
        let sigma = match (&self.sigma, &self.sigma_x) {
            (Some(s), _) => units.momenta(s),
            (None, Some(x)) => units.lengths(x).iter().map(|l| 1.0 / l).collect(),
            (None, None) => Vec::new(),
        };
        let shape = match &self.shape {
            ShapeSpec::Gaussian => ShapeSpec::Gaussian,
            ShapeSpec::Vortex { kappa, ell } => ShapeSpec::Vortex { kappa: units.momentum(*kappa), ell: *ell },
            ShapeSpec::Airy { xi } => ShapeSpec::Airy { xi: units.length(*xi) },
            ShapeSpec::Cat { components } => ShapeSpec::Cat {
                components: components
                    .iter()
                    .map(|c| CatComponent {
                        weight: c.weight,
                        shift_b: units.lengths(&c.shift_b),
                        mean_p: c.mean_p.as_ref().map(|m| units.momenta(m)),
                    })
                    .collect(),
            },
        };
        PacketSpec {
            dim,
            mean_p: units.momenta(&or_zero(&self.mean_p)),
            sigma,
            shift_b: units.lengths(&or_zero(&self.shift_b)),
            shape,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleConfig {
    pub mass: f64,
    pub packet: PacketConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionConfig {
    #[serde(default)]
    pub sqrt_s: Option<f64>,
    /// Centre-of-mass momentum of each beam.
    #[serde(default)]
    pub beam_momentum: Option<f64>,
    pub impact_parameter: Vec<f64>,
    #[serde(default = "default_axis")]
    pub axis: String,
}

fn default_axis() -> String {
    String::from("z")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WignerSource {
    First,
    Second,
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub dim: usize,
    pub r_range: [f64; 2],
    pub n_r: usize,
    pub p_range: [f64; 2],
    pub n_p: usize,
}

impl GridConfig {
    pub fn to_grid(&self, units: Units) -> PhaseSpaceGrid {
        PhaseSpaceGrid {
            dim: self.dim,
            r_range: (units.length(self.r_range[0]), units.length(self.r_range[1])),
            n_r: self.n_r,
            p_range: (units.momentum(self.p_range[0]), units.momentum(self.p_range[1])),
            n_p: self.n_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerRequest {
    pub name: String,
    pub source: WignerSource,
    pub grid: GridConfig,
}

fn default_phi_bins() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservablesConfig {
    #[serde(default)]
    pub wigner: Vec<WignerRequest>,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default = "default_phi_bins")]
    pub phi_bins: usize,
    #[serde(default)]
    pub phi_offset: f64,
    /// Values of `sigma_p / m1` for the scaling sweep.
    #[serde(default)]
    pub sigma_sweep: Vec<f64>,
    /// `[theta, phi]` of the sweep; defaults to the first angle and the
    /// reference azimuth.
    #[serde(default)]
    pub sweep_angles: Option<[f64; 2]>,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub atom_size: Option<f64>,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        Self {
            wigner: Vec::new(),
            theta: Vec::new(),
            phi_bins: default_phi_bins(),
            phi_offset: 0.0,
            sigma_sweep: Vec::new(),
            sweep_angles: None,
            oracle: None,
            atom_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: u64,
    #[serde(default)]
    pub units: Units,
    pub particles: Vec<ParticleConfig>,
    pub collision: CollisionConfig,
    /// Amplitude parameters are always in natural units (MeV powers).
    pub amplitude: AmplitudeModel,
    #[serde(default)]
    pub observables: ObservablesConfig,
}

impl ScenarioConfig {
    pub fn mass(&self, index: usize) -> f64 {
        self.units.momentum(self.particles[index].mass)
    }

    pub fn sqrt_s(&self) -> f64 {
        let (m1, m2) = (self.mass(0), self.mass(1));
        match (self.collision.sqrt_s, self.collision.beam_momentum) {
            (Some(e), _) => self.units.momentum(e),
            (None, Some(p)) => {
                let p = self.units.momentum(p);
                (m1 * m1 + p * p).sqrt() + (m2 * m2 + p * p).sqrt()
            }
            (None, None) => 0.0,
        }
    }

    pub fn atom_size(&self) -> Option<f64> {
        self.observables.atom_size.map(|a| self.units.length(a))
    }

    pub fn scenario(&self) -> ScatteringScenario {
        let u = self.units;
        ScatteringScenario {
            m1: self.mass(0),
            m2: self.mass(1),
            sqrt_s: self.sqrt_s(),
            first: self.particles[0].packet.to_spec(u),
            second: self.particles[1].packet.to_spec(u),
            impact: u.lengths(&self.collision.impact_parameter),
            amplitude: self.amplitude.clone(),
            thetas: self.observables.theta.clone(),
            phi_bins: self.observables.phi_bins,
            phi_offset: self.observables.phi_offset,
        }
    }

    pub fn sweep_angles(&self) -> (f64, f64) {
        match self.observables.sweep_angles {
            Some([t, p]) => (t, p),
            None => (self.observables.theta.first().copied().unwrap_or(1.0), self.observables.phi_offset),
        }
    }
}

/// Parse and fully validate a configuration document.
pub fn load(text: &str) -> Result<(Value, ScenarioConfig), Vec<Violation>> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| vec![Violation { path: String::from("$"), message: format!("invalid JSON: {e}") }])?;
    let violations = validate(&value);
    if !violations.is_empty() {
        return Err(violations);
    }
    let config: ScenarioConfig = serde_json::from_value(value.clone())
        .map_err(|e| vec![Violation { path: String::from("$"), message: e.to_string() }])?;
    Ok((value, config))
}

/// Every schema and consistency violation in `value`.
pub fn validate(value: &Value) -> Vec<Violation> {
    let mut c = Checker::default();
    c.top(value);
    c.found
}

#[derive(Clone, Copy)]
enum Rule {
    Any,
    Positive,
    NonNegative,
    /// Open interval `(0, pi)`.
    PolarAngle,
}

#[derive(Default)]
struct Checker {
    found: Vec<Violation>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Checker {
    fn fail(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.found.push(Violation { path: path.into(), message: message.into() });
    }

    fn count(&self) -> usize {
        self.found.len()
    }

    fn object<'a>(
        &mut self,
        v: &'a Value,
        path: &str,
        required: &[&str],
        optional: &[&str],
    ) -> Option<&'a Map<String, Value>> {
        let Some(map) = v.as_object() else {
            self.fail(if path.is_empty() { "$" } else { path }, "expected an object");
            return None;
        };
        for key in map.keys() {
            if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
                self.fail(join(path, key), "unknown key");
            }
        }
        for key in required {
            if !map.contains_key(*key) {
                self.fail(join(path, key), "missing required key");
            }
        }
        Some(map)
    }

    fn number_value(&mut self, v: &Value, path: &str, rule: Rule) -> Option<f64> {
        let Some(x) = v.as_f64() else {
            self.fail(path, "expected a number");
            return None;
        };
        let ok = match rule {
            Rule::Any => x.is_finite(),
            Rule::Positive => x.is_finite() && x > 0.0,
            Rule::NonNegative => x.is_finite() && x >= 0.0,
            Rule::PolarAngle => x > 0.0 && x < std::f64::consts::PI,
        };
        if !ok {
            let what = match rule {
                Rule::Any => "must be finite",
                Rule::Positive => "must be positive",
                Rule::NonNegative => "must be nonnegative",
                Rule::PolarAngle => "must lie in (0, pi)",
            };
            self.fail(path, format!("{what}, got {x}"));
            return None;
        }
        Some(x)
    }

    fn number(&mut self, map: &Map<String, Value>, key: &str, path: &str, rule: Rule) -> Option<f64> {
        map.get(key).and_then(|v| self.number_value(v, &join(path, key), rule))
    }

    fn numbers(
        &mut self,
        map: &Map<String, Value>,
        key: &str,
        path: &str,
        len: Option<usize>,
        rule: Rule,
    ) -> Option<Vec<f64>> {
        let v = map.get(key)?;
        let path = join(path, key);
        let Some(items) = v.as_array() else {
            self.fail(path, "expected an array of numbers");
            return None;
        };
        if let Some(n) = len {
            if items.len() != n {
                self.fail(&path, format!("expected {n} entries, got {}", items.len()));
                return None;
            }
        }
        let before = self.count();
        let out: Vec<f64> =
            items.iter().enumerate().filter_map(|(i, x)| self.number_value(x, &format!("{path}[{i}]"), rule)).collect();
        (self.count() == before).then_some(out)
    }

    fn integer(&mut self, map: &Map<String, Value>, key: &str, path: &str) -> Option<u64> {
        let v = map.get(key)?;
        let n = v.as_u64();
        if n.is_none() {
            self.fail(join(path, key), "expected a nonnegative integer");
        }
        n
    }

    fn choice(&mut self, map: &Map<String, Value>, key: &str, path: &str, options: &[&str]) -> Option<String> {
        let v = map.get(key)?;
        match v.as_str() {
            Some(s) if options.contains(&s) => Some(s.to_string()),
            _ => {
                self.fail(join(path, key), format!("expected one of {}", options.join(", ")));
                None
            }
        }
    }

    fn top(&mut self, v: &Value) {
        let Some(map) =
            self.object(v, "", &["schema_version", "particles", "collision", "amplitude"], &["units", "observables"])
        else {
            return;
        };
        if let Some(version) = self.integer(map, "schema_version", "") {
            if version != SCHEMA_VERSION {
                self.fail("schema_version", format!("unsupported schema version {version}, expected {SCHEMA_VERSION}"));
            }
        }
        let units = match self.choice(map, "units", "", &["natural", "nm-keV"]).as_deref() {
            Some("nm-keV") => Units::NmKev,
            _ => Units::Natural,
        };
        let mut dims = Vec::new();
        let mut specs = Vec::new();
        if let Some(p) = map.get("particles") {
            match p.as_array() {
                Some(items) if items.len() == 2 => {
                    for (i, item) in items.iter().enumerate() {
                        let (dim, spec) = self.particle(item, &format!("particles[{i}]"), units);
                        dims.push(dim);
                        specs.push(spec);
                    }
                }
                _ => self.fail("particles", "expected an array of exactly two particles"),
            }
        }
        let dim = match dims.as_slice() {
            [Some(a), Some(b)] if a != b => {
                self.fail("particles[1].packet.dim", format!("dim {b} differs from particles[0] dim {a}"));
                None
            }
            [Some(a), Some(_)] => Some(*a),
            _ => None,
        };
        if let (Some(s1), Some(s2)) = (specs.first().cloned().flatten(), specs.get(1).cloned().flatten()) {
            if let (Ok(a), Ok(b)) = (make_packet(&s1), make_packet(&s2)) {
                if let Err(e) = RelativeState::new(a, b, &vec![0.0; s1.dim]) {
                    self.fail("particles", e.to_string());
                }
            }
        }
        if let Some(c) = map.get("collision") {
            self.collision(c, dim);
        }
        let kind = map.get("amplitude").and_then(|a| self.amplitude(a));
        if let Some(o) = map.get("observables") {
            self.observables(o, dim, kind.as_deref());
        }
        if self.count() == 0 {
            // Kinematic consistency needs the typed form.
            if let Ok(config) = serde_json::from_value::<ScenarioConfig>(v.clone()) {
                let sqrt_s = config.sqrt_s();
                let threshold = config.mass(0) + config.mass(1);
                if !(sqrt_s > threshold) {
                    self.fail("collision", format!("sqrt_s = {sqrt_s} MeV is not above m1 + m2 = {threshold} MeV"));
                }
            }
        }
    }

    fn particle(&mut self, v: &Value, path: &str, units: Units) -> (Option<usize>, Option<PacketSpec>) {
        let Some(map) = self.object(v, path, &["mass", "packet"], &[]) else {
            return (None, None);
        };
        self.number(map, "mass", path, Rule::Positive);
        match map.get("packet") {
            Some(p) => self.packet(p, &join(path, "packet"), units),
            None => (None, None),
        }
    }

    fn packet(&mut self, v: &Value, path: &str, units: Units) -> (Option<usize>, Option<PacketSpec>) {
        let before = self.count();
        let kinds = ["gaussian", "vortex", "airy", "cat"];
        let kind = v.get("kind").and_then(Value::as_str).filter(|k| kinds.contains(k));
        let common = ["dim", "kind"];
        let optional: Vec<&str> = ["mean_p", "sigma", "sigma_x", "shift_b"]
            .into_iter()
            .chain(match kind {
                Some("vortex") => vec!["kappa", "ell"],
                Some("airy") => vec!["xi"],
                Some("cat") => vec!["components"],
                _ => vec![],
            })
            .collect();
        let Some(map) = self.object(v, path, &common, &optional) else {
            return (None, None);
        };
        if map.contains_key("kind") && kind.is_none() {
            self.fail(join(path, "kind"), format!("expected one of {}", kinds.join(", ")));
        }
        let dim = self.integer(map, "dim", path).map(|d| d as usize);
        let dim = match dim {
            Some(d @ 1..=2) => Some(d),
            Some(d) => {
                self.fail(join(path, "dim"), format!("dim must be 1 or 2, got {d}"));
                None
            }
            None => None,
        };
        let len = dim;
        self.numbers(map, "mean_p", path, len, Rule::Any);
        self.numbers(map, "shift_b", path, len, Rule::Any);
        match (map.contains_key("sigma"), map.contains_key("sigma_x")) {
            (true, true) => self.fail(join(path, "sigma"), "give either sigma or sigma_x, not both"),
            (false, false) => self.fail(join(path, "sigma"), "missing required key (or sigma_x)"),
            _ => {}
        }
        let widths = self
            .numbers(map, "sigma", path, len, Rule::Positive)
            .or_else(|| self.numbers(map, "sigma_x", path, len, Rule::Positive));
        match kind {
            Some("vortex") => {
                for key in ["kappa", "ell"] {
                    if !map.contains_key(key) {
                        self.fail(join(path, key), "missing required key");
                    }
                }
                self.number(map, "kappa", path, Rule::NonNegative);
                if let Some(ell) = self.number(map, "ell", path, Rule::Any) {
                    if ell.fract() != 0.0 {
                        self.fail(join(path, "ell"), format!("ell must be an integer, got {ell}"));
                    }
                }
                if dim == Some(1) {
                    self.fail(join(path, "kind"), "vortex requires dim=2");
                }
                if let Some(w) = &widths {
                    if w.len() == 2 && w[0] != w[1] {
                        self.fail(join(path, "sigma"), "vortex requires equal widths on both axes");
                    }
                }
            }
            Some("airy") => {
                if !map.contains_key("xi") {
                    self.fail(join(path, "xi"), "missing required key");
                }
                self.number(map, "xi", path, Rule::Any);
            }
            Some("cat") => self.components(map, path, dim),
            _ => {}
        }
        if self.count() != before {
            return (dim, None);
        }
        let config: PacketConfig = match serde_json::from_value(v.clone()) {
            Ok(c) => c,
            Err(e) => {
                self.fail(path, e.to_string());
                return (dim, None);
            }
        };
        let spec = config.to_spec(units);
        if let Err(e) = make_packet(&spec) {
            self.fail(path, e.to_string());
            return (dim, None);
        }
        (dim, Some(spec))
    }

    fn components(&mut self, map: &Map<String, Value>, path: &str, dim: Option<usize>) {
        let Some(v) = map.get("components") else {
            self.fail(join(path, "components"), "missing required key");
            return;
        };
        let path = join(path, "components");
        match v.as_array() {
            Some(items) if !items.is_empty() => {
                for (i, item) in items.iter().enumerate() {
                    let p = format!("{path}[{i}]");
                    if let Some(m) = self.object(item, &p, &["weight", "shift_b"], &["mean_p"]) {
                        self.numbers(m, "weight", &p, Some(2), Rule::Any);
                        self.numbers(m, "shift_b", &p, dim, Rule::Any);
                        self.numbers(m, "mean_p", &p, dim, Rule::Any);
                    }
                }
            }
            _ => self.fail(path, "expected a nonempty array"),
        }
    }

    fn collision(&mut self, v: &Value, dim: Option<usize>) {
        let path = "collision";
        let Some(map) = self.object(v, path, &["impact_parameter"], &["sqrt_s", "beam_momentum", "axis"]) else {
            return;
        };
        match (map.contains_key("sqrt_s"), map.contains_key("beam_momentum")) {
            (true, true) => self.fail("collision.sqrt_s", "give either sqrt_s or beam_momentum, not both"),
            (false, false) => self.fail("collision.sqrt_s", "missing required key (or beam_momentum)"),
            _ => {}
        }
        self.number(map, "sqrt_s", path, Rule::Positive);
        self.number(map, "beam_momentum", path, Rule::Positive);
        self.numbers(map, "impact_parameter", path, dim, Rule::Any);
        self.choice(map, "axis", path, &["z"]);
    }

    fn amplitude(&mut self, v: &Value) -> Option<String> {
        let path = "amplitude";
        let kinds = ["constant_phase", "log_phase", "polynomial_phase", "tabulated"];
        let kind = v.get("kind").and_then(Value::as_str).filter(|k| kinds.contains(k));
        let (required, optional): (Vec<&str>, Vec<&str>) = match kind {
            Some("constant_phase") => (vec![], vec!["norm", "power", "zeta0"]),
            Some("log_phase") => (vec!["eta"], vec!["norm", "power", "lambda_sq", "screening_sq"]),
            Some("polynomial_phase") => (vec!["terms"], vec!["norm", "power"]),
            Some("tabulated") => (vec!["t", "modulus", "phase"], vec![]),
            _ => (vec![], vec![]),
        };
        let required: Vec<&str> = std::iter::once("kind").chain(required).collect();
        let before = self.count();
        let map = self.object(v, path, &required, &optional)?;
        if map.contains_key("kind") && kind.is_none() {
            self.fail("amplitude.kind", format!("expected one of {}", kinds.join(", ")));
            return None;
        }
        self.number(map, "norm", path, Rule::Positive);
        self.number(map, "power", path, Rule::Any);
        self.number(map, "zeta0", path, Rule::Any);
        self.number(map, "eta", path, Rule::Any);
        self.number(map, "lambda_sq", path, Rule::Positive);
        self.number(map, "screening_sq", path, Rule::NonNegative);
        for key in ["t", "modulus", "phase"] {
            self.numbers(map, key, path, None, Rule::Any);
        }
        if let Some(terms) = map.get("terms") {
            match terms.as_array() {
                Some(items) => {
                    for (i, item) in items.iter().enumerate() {
                        let p = format!("amplitude.terms[{i}]");
                        if let Some(m) = self.object(item, &p, &["s_pow", "t_pow", "coeff"], &[]) {
                            self.integer(m, "s_pow", &p);
                            self.integer(m, "t_pow", &p);
                            self.number(m, "coeff", &p, Rule::Any);
                        }
                    }
                }
                None => self.fail("amplitude.terms", "expected an array"),
            }
        }
        if self.count() == before {
            match serde_json::from_value::<AmplitudeModel>(v.clone()) {
                Ok(model) => {
                    if let Err(e) = model.validate() {
                        self.fail(path, e.to_string());
                    }
                }
                Err(e) => self.fail(path, e.to_string()),
            }
        }
        kind.map(str::to_string)
    }

    fn observables(&mut self, v: &Value, dim: Option<usize>, amplitude_kind: Option<&str>) {
        let path = "observables";
        let Some(map) = self.object(
            v,
            path,
            &[],
            &["wigner", "theta", "phi_bins", "phi_offset", "sigma_sweep", "sweep_angles", "oracle", "atom_size"],
        ) else {
            return;
        };
        let thetas = self.numbers(map, "theta", path, None, Rule::PolarAngle);
        if let Some(n) = self.integer(map, "phi_bins", path) {
            if n < 8 || n % 2 != 0 {
                self.fail("observables.phi_bins", format!("phi_bins must be even and >= 8, got {n}"));
            }
        }
        self.number(map, "phi_offset", path, Rule::Any);
        if let Some(angles) = self.numbers(map, "sweep_angles", path, Some(2), Rule::Any) {
            if !(angles[0] > 0.0 && angles[0] < std::f64::consts::PI) {
                self.fail("observables.sweep_angles[0]", "theta must lie in (0, pi)");
            }
        }
        if self.number(map, "atom_size", path, Rule::Positive).is_some()
            && amplitude_kind.is_some_and(|k| k != "log_phase")
        {
            self.fail("observables.atom_size", "atom-scale asymmetry requires a log_phase amplitude");
        }
        if let Some(o) = map.get("oracle") {
            self.oracle(o);
        }
        if let Some(sweep) = self.numbers(map, "sigma_sweep", path, None, Rule::Positive) {
            if !sweep.is_empty() {
                let lo = sweep.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = sweep.iter().copied().fold(0.0, f64::max);
                if sweep.len() < 4 || hi < 10.0 * lo {
                    self.fail("observables.sigma_sweep", "needs at least 4 widths spanning a decade");
                }
                if !map.contains_key("oracle") {
                    self.fail("observables.sigma_sweep", "requires observables.oracle");
                }
                let has_angle = map.contains_key("sweep_angles") || thetas.as_ref().is_some_and(|t| !t.is_empty());
                if !has_angle {
                    self.fail("observables.sigma_sweep", "requires observables.theta or observables.sweep_angles");
                }
            }
        }
        if let Some(w) = map.get("wigner") {
            self.wigner(w, dim);
        }
    }

    fn oracle(&mut self, v: &Value) {
        let path = "observables.oracle";
        let before = self.count();
        let Some(map) = self.object(v, path, &["method", "seed"], &["nodes", "samples", "target_rel_error"]) else {
            return;
        };
        self.choice(map, "method", path, &["tensor_quadrature", "monte_carlo"]);
        self.integer(map, "seed", path);
        self.integer(map, "nodes", path);
        self.integer(map, "samples", path);
        self.number(map, "target_rel_error", path, Rule::Positive);
        if self.count() != before {
            return;
        }
        let checked = serde_json::from_value::<OracleConfig>(v.clone())
            .map_err(|e| e.to_string())
            .and_then(|cfg| cfg.validate().map_err(|e| e.to_string()));
        if let Err(message) = checked {
            self.fail(path, message);
        }
    }

    fn wigner(&mut self, v: &Value, dim: Option<usize>) {
        let Some(items) = v.as_array() else {
            self.fail("observables.wigner", "expected an array");
            return;
        };
        let mut names = BTreeSet::new();
        for (i, item) in items.iter().enumerate() {
            let path = format!("observables.wigner[{i}]");
            let Some(map) = self.object(item, &path, &["name", "source", "grid"], &[]) else {
                continue;
            };
            if let Some(name) = map.get("name") {
                match name.as_str() {
                    Some(n)
                        if !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') =>
                    {
                        if !names.insert(n.to_string()) {
                            self.fail(join(&path, "name"), format!("duplicate grid name {n:?}"));
                        }
                    }
                    _ => self.fail(join(&path, "name"), "expected a nonempty name of letters, digits, '_' or '-'"),
                }
            }
            self.choice(map, "source", &path, &["first", "second", "relative"]);
            if let Some(g) = map.get("grid") {
                let gpath = join(&path, "grid");
                let before = self.count();
                if let Some(gm) = self.object(g, &gpath, &["dim", "r_range", "n_r", "p_range", "n_p"], &[]) {
                    if let (Some(d), Some(expected)) = (self.integer(gm, "dim", &gpath), dim) {
                        if d as usize != expected {
                            self.fail(join(&gpath, "dim"), format!("grid dim {d} differs from packet dim {expected}"));
                        }
                    }
                    self.numbers(gm, "r_range", &gpath, Some(2), Rule::Any);
                    self.numbers(gm, "p_range", &gpath, Some(2), Rule::Any);
                    self.integer(gm, "n_r", &gpath);
                    self.integer(gm, "n_p", &gpath);
                }
                if self.count() == before {
                    if let Ok(grid) = serde_json::from_value::<GridConfig>(g.clone()) {
                        if let Err(e) = grid.to_grid(Units::Natural).validate() {
                            self.fail(gpath, e.to_string());
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "schema_version": 1,
            "particles": [
                {"mass": 0.511, "packet": {"dim": 1, "kind": "gaussian", "sigma": [0.001]}},
                {"mass": 0.511, "packet": {"dim": 1, "kind": "gaussian", "sigma": [0.001]}}
            ],
            "collision": {"sqrt_s": 1.622, "impact_parameter": [1000.0]},
            "amplitude": {"kind": "constant_phase"},
            "observables": {"theta": [1.0]}
        })
    }

    #[test]
    fn minimal_config_is_valid() {
        assert_eq!(validate(&minimal()), vec![]);
        let (_, cfg) = load(&minimal().to_string()).unwrap();
        assert_eq!(cfg.observables.phi_bins, 16);
        assert_eq!(cfg.scenario().first.sigma, vec![0.001]);
    }

    #[test]
    fn negative_sigma_is_one_violation() {
        let mut v = minimal();
        v["particles"][0]["packet"]["sigma"] = json!([-0.001]);
        let found = validate(&v);
        assert_eq!(found.len(), 1, "{found:?}");
        assert_eq!(found[0].path, "particles[0].packet.sigma[0]");
    }

    #[test]
    fn vortex_in_one_dimension() {
        let mut v = minimal();
        v["particles"][1]["packet"] = json!({"dim": 1, "kind": "vortex", "sigma": [0.001], "kappa": 0.002, "ell": 1});
        let found = validate(&v);
        assert!(found.iter().any(|f| f.message == "vortex requires dim=2"), "{found:?}");
    }

    #[test]
    fn every_violation_is_listed() {
        let mut v = minimal();
        v["particles"][0].as_object_mut().unwrap().remove("mass");
        v["collision"]["colour"] = json!("red");
        v["observables"]["phi_bins"] = json!(7);
        v["amplitude"] = json!({"kind": "log_phase"});
        let found = validate(&v);
        let paths: Vec<&str> = found.iter().map(|f| f.path.as_str()).collect();
        assert!(paths.contains(&"particles[0].mass"));
        assert!(paths.contains(&"collision.colour"));
        assert!(paths.contains(&"observables.phi_bins"));
        assert!(paths.contains(&"amplitude.eta"));
    }

    #[test]
    fn oracle_needs_seed_and_sweep_needs_oracle() {
        let mut v = minimal();
        v["observables"]["oracle"] = json!({"method": "monte_carlo", "samples": 20000});
        v["observables"]["sigma_sweep"] = json!([1e-4, 1e-3]);
        let found = validate(&v);
        assert!(found.iter().any(|f| f.path == "observables.oracle.seed"));
        assert!(found.iter().any(|f| f.path == "observables.sigma_sweep"));
    }

    #[test]
    fn below_threshold_and_version() {
        let mut v = minimal();
        v["collision"]["sqrt_s"] = json!(1.0);
        assert_eq!(validate(&v)[0].path, "collision");
        v["schema_version"] = json!(2);
        assert!(validate(&v).iter().any(|f| f.path == "schema_version"));
    }

    #[test]
    fn nm_kev_units_convert_and_round_trip() {
        let mut v = minimal();
        v["units"] = json!("nm-keV");
        v["particles"][0] =
            json!({"mass": 511.0, "packet": {"dim": 1, "kind": "gaussian", "sigma_x": [0.1], "shift_b": [0.05]}});
        v["particles"][1]["mass"] = json!(511.0);
        v["particles"][1]["packet"]["sigma"] = json!([1.0]);
        v["collision"] = json!({"beam_momentum": 630.0, "impact_parameter": [0.1]});
        let (_, cfg) = load(&v.to_string()).unwrap();
        let sc = cfg.scenario();
        assert!((sc.m1 - 0.511).abs() < 1e-15);
        let sigma_x = 1.0 / sc.first.sigma[0];
        let back = packetscat::kinematics::natural_to_nm(sigma_x);
        assert!((back - 0.1).abs() < 1e-12 * 0.1);
        let b = packetscat::kinematics::natural_to_nm(sc.impact[0]);
        assert!((b - 0.1).abs() < 1e-12 * 0.1);
        let p = packetscat::kinematics::mev_to_kev(sc.second.sigma[0]);
        assert!((p - 1.0).abs() < 1e-12);
        let pz = packetscat::kinematics::cm_momentum(sc.sqrt_s * sc.sqrt_s, sc.m1, sc.m2).unwrap();
        assert!((packetscat::kinematics::mev_to_kev(pz) - 630.0).abs() < 1e-12 * 630.0);
    }

    proptest::proptest! {
        #[test]
        fn units_round_trip(length in 1e-4f64..1e3, energy in 1e-3f64..1e6) {
            let u = Units::NmKev;
            let l = packetscat::kinematics::natural_to_nm(u.length(length));
            let e = packetscat::kinematics::mev_to_kev(u.momentum(energy));
            proptest::prop_assert!((l / length - 1.0).abs() < 1e-12);
            proptest::prop_assert!((e / energy - 1.0).abs() < 1e-12);
            proptest::prop_assert_eq!(Units::Natural.length(length), length);
        }
    }
}
