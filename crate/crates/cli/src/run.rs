//! Batch pipeline behind `packetscat run`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use packetscat::correction::{AsymmetrySummary, BinRow, CorrectionReport, Prepared};
use packetscat::kinematics::ParaxialityReport;
use packetscat::oracle::{averaged_bilinear, scaling_probe, ScalingProbe};
use packetscat::packets::{make_packet, RelativeState, Vec2};
use packetscat::wigner::{negativity_volume, wigner_transform, WignerGrid};
use packetscat::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{self, ScenarioConfig, Violation, WignerSource};

pub const ASYMMETRY_HEADER: &str = "theta,phi_bin_center,pw_dsigma_dt,first_order_ratio,oracle_ratio,oracle_err";
pub const SCALING_HEADER: &str = "sigma_ratio,oracle_ratio,oracle_error,first_order_ratio";

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration; nothing was written.
    Config(Vec<Violation>),
    /// The run finished with numerical failures; a report was written.
    Numerical(Box<RunReport>),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Pipeline stage, e.g. `wigner:cat` or `oracle`.
    pub stage: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerSummary {
    pub name: String,
    pub source: WignerSource,
    pub file: String,
    pub negativity_volume: f64,
    pub min: f64,
    pub max_abs: f64,
    pub total: f64,
    pub imag_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomScaleSummary {
    pub theta: f64,
    pub atom_size: f64,
    /// `a / sigma_x` of the first packet.
    pub scale: f64,
    pub asymmetry: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub bins: usize,
    pub wigner_cells: usize,
    pub oracle_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: ToolInfo,
    pub config: Value,
    /// SHA-256 of the config serialized with sorted keys and no whitespace.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub status: String,
    pub diagnostics: Vec<Diagnostic>,
    pub paraxiality: Option<[ParaxialityReport; 2]>,
    pub effective_dipole: Option<Vec2>,
    pub bins: Vec<BinRow>,
    pub asymmetries: Vec<AsymmetrySummary>,
    pub atom_scale: Vec<AtomScaleSummary>,
    pub wigner: Vec<WignerSummary>,
    pub scaling: Option<ScalingProbe>,
    pub counts: Counts,
    pub timing: Timing,
}

pub fn config_hash(value: &Value) -> String {
    // serde_json's default map is ordered, so this text is canonical.
    let canonical = serde_json::to_string(value).expect("JSON values always serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Read and validate a config file; I/O problems are reported as a violation at `$`.
pub fn load_file(path: &Path) -> Result<(Value, ScenarioConfig), Vec<Violation>> {
    let text = fs::read_to_string(path).map_err(|e| {
        vec![Violation { path: String::from("$"), message: format!("cannot read {}: {e}", path.display()) }]
    })?;
    config::load(&text)
}

/// Violations of the config at `path`; empty when it is valid.
pub fn validate_file(path: &Path) -> Vec<Violation> {
    load_file(path).err().unwrap_or_default()
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::NonConservedMomentum { .. } => "non_conserved_momentum",
        Error::BelowThreshold { .. } => "below_threshold",
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::NormalizationFailure(_) => "normalization_failure",
        Error::QuadratureNonConvergence { .. } => "quadrature_non_convergence",
        Error::GridTooCoarse { .. } => "grid_too_coarse",
        Error::AliasingDetected { .. } => "aliasing_detected",
        Error::OutOfDomain { .. } => "out_of_domain",
        Error::WignerGradientUnstable { .. } => "wigner_gradient_unstable",
        Error::DegenerateDipole => "degenerate_dipole",
        Error::NonConvergence { .. } => "non_convergence",
        Error::NegativeValueBeyondError { .. } => "negative_value_beyond_error",
    }
}

fn fmt_float(x: f64) -> String {
    format!("{x:e}")
}

fn fmt_optional(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn asymmetry_csv(bins: &[BinRow]) -> String {
    let mut out = String::from(ASYMMETRY_HEADER);
    out.push('\n');
    for b in bins {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_float(b.theta),
            fmt_float(b.phi),
            fmt_float(b.dsigma_dt),
            fmt_float(b.first_order_ratio),
            fmt_optional(b.oracle_ratio),
            fmt_optional(b.oracle_err)
        );
    }
    out
}

pub fn scaling_csv(probe: &ScalingProbe) -> String {
    let mut out = String::from(SCALING_HEADER);
    out.push('\n');
    for r in &probe.rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_float(r.sigma_ratio),
            fmt_float(r.oracle_ratio),
            fmt_float(r.oracle_error),
            fmt_float(r.first_order_ratio)
        );
    }
    out
}

/// Write via a temporary file in the same directory and rename into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

struct Pipeline<'a> {
    config: &'a ScenarioConfig,
    out: &'a Path,
    diagnostics: Vec<Diagnostic>,
    counts: Counts,
}

impl Pipeline<'_> {
    fn record(&mut self, stage: &str, e: &Error) {
        self.diagnostics.push(Diagnostic {
            stage: stage.to_string(),
            kind: error_kind(e).to_string(),
            message: e.to_string(),
        });
    }

    fn wigner(&mut self) -> std::io::Result<Vec<WignerSummary>> {
        let cfg = self.config;
        let mut out = Vec::new();
        for request in &cfg.observables.wigner {
            let stage = format!("wigner:{}", request.name);
            let grid = request.grid.to_grid(cfg.units);
            let result = (|| -> packetscat::Result<WignerGrid> {
                let first = make_packet(&cfg.particles[0].packet.to_spec(cfg.units))?;
                let second = make_packet(&cfg.particles[1].packet.to_spec(cfg.units))?;
                match request.source {
                    WignerSource::First => wigner_transform(&first, &grid),
                    WignerSource::Second => wigner_transform(&second, &grid),
                    WignerSource::Relative => {
                        let impact: Vec<f64> =
                            cfg.collision.impact_parameter.iter().map(|&b| cfg.units.length(b)).collect();
                        wigner_transform(&RelativeState::new(first, second, &impact)?, &grid)
                    }
                }
            })();
            match result {
                Ok(w) => {
                    let file = format!("wigner_{}.csv", request.name);
                    write_atomic(&self.out.join(&file), w.to_csv().as_bytes())?;
                    self.counts.wigner_cells += w.values.len();
                    out.push(WignerSummary {
                        name: request.name.clone(),
                        source: request.source,
                        file,
                        negativity_volume: negativity_volume(&w),
                        min: w.min(),
                        max_abs: w.max_abs(),
                        total: w.total(),
                        imag_residual: w.imag_residual,
                    });
                }
                Err(e) => self.record(&stage, &e),
            }
        }
        Ok(out)
    }

    fn oracle_column(&mut self, prepared: &Prepared, bins: &mut [BinRow]) {
        let Some(oracle) = &self.config.observables.oracle else {
            return;
        };
        for bin in bins {
            match averaged_bilinear(prepared, bin.theta, bin.phi, oracle) {
                Ok(r) => {
                    bin.oracle_ratio = Some(r.ratio);
                    bin.oracle_err = Some(r.ratio_error);
                    self.counts.oracle_evaluations += r.evaluations;
                }
                Err(e) => self.record(&format!("oracle:theta={},phi={}", bin.theta, bin.phi), &e),
            }
        }
    }
}

/// Run the configured pipelines on the current rayon pool.
///
/// The config is fully validated before `out` is created, so a config error
/// leaves no files behind.
pub fn run(config_path: &Path, out: &Path) -> Result<RunReport, CliError> {
    let clock = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let (value, cfg) = load_file(config_path).map_err(CliError::Config)?;
    fs::create_dir_all(out)?;

    let mut pipeline = Pipeline { config: &cfg, out, diagnostics: Vec::new(), counts: Counts::default() };
    let wigner = pipeline.wigner()?;

    let mut correction = None;
    let mut atom_scale = Vec::new();
    match cfg.scenario().prepare() {
        Ok(prepared) => {
            match CorrectionReport::build(&prepared, None, cfg.atom_size()) {
                Ok(mut report) => {
                    pipeline.oracle_column(&prepared, &mut report.bins);
                    correction = Some(report);
                }
                Err(e) => pipeline.record("correction", &e),
            }
            if let Some(a) = cfg.atom_size() {
                for &theta in &cfg.observables.theta {
                    match prepared.atom_scale_asymmetry(theta, a) {
                        Ok(s) => atom_scale.push(AtomScaleSummary {
                            theta,
                            atom_size: a,
                            scale: s.scale,
                            asymmetry: s.asymmetry.value,
                            degenerate: s.asymmetry.degenerate,
                        }),
                        Err(e) => pipeline.record("atom_scale", &e),
                    }
                }
            }
        }
        Err(e) => pipeline.record("prepare", &e),
    }
    let bins = correction.as_ref().map(|c| c.bins.clone()).unwrap_or_default();
    write_atomic(&out.join("asymmetry.csv"), asymmetry_csv(&bins).as_bytes())?;

    let mut scaling = None;
    if let (Some(oracle), false) = (&cfg.observables.oracle, cfg.observables.sigma_sweep.is_empty()) {
        let (theta, phi) = cfg.sweep_angles();
        match scaling_probe(&cfg.scenario(), &cfg.observables.sigma_sweep, theta, phi, oracle) {
            Ok(probe) => {
                pipeline.counts.oracle_evaluations += probe.rows.iter().map(|r| r.evaluations).sum::<usize>();
                write_atomic(&out.join("scaling.csv"), scaling_csv(&probe).as_bytes())?;
                scaling = Some(probe);
            }
            Err(e) => pipeline.record("scaling", &e),
        }
    }

    pipeline.counts.bins = bins.len();
    let failed = !pipeline.diagnostics.is_empty();
    let report = RunReport {
        tool: ToolInfo { name: String::from("packetscat"), version: env!("CARGO_PKG_VERSION").to_string() },
        config_hash: config_hash(&value),
        config: value,
        seed: cfg.observables.oracle.map(|o| o.seed),
        status: String::from(if failed { "numerical_failure" } else { "ok" }),
        diagnostics: pipeline.diagnostics,
        paraxiality: correction.as_ref().map(|c| c.paraxiality),
        effective_dipole: correction.as_ref().map(|c| c.effective_dipole),
        bins,
        asymmetries: correction.map(|c| c.asymmetries).unwrap_or_default(),
        atom_scale,
        wigner,
        scaling,
        counts: pipeline.counts,
        timing: Timing {
            started_unix,
            wall_clock_seconds: clock.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        },
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_atomic(&out.join("report.json"), json.as_bytes())?;
    if failed {
        Err(CliError::Numerical(Box::new(report)))
    } else {
        Ok(report)
    }
}

/// [`run`] inside a dedicated pool of `threads` workers (all cores when `None`).
pub fn run_with_threads(config_path: &Path, out: &Path, threads: Option<usize>) -> Result<RunReport, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    pool.install(|| run(config_path, out))
}

/// Paths of the CSV files a run writes for this config.
pub fn expected_outputs(cfg: &ScenarioConfig, out: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> =
        cfg.observables.wigner.iter().map(|w| out.join(format!("wigner_{}.csv", w.name))).collect();
    files.push(out.join("asymmetry.csv"));
    if !cfg.observables.sigma_sweep.is_empty() {
        files.push(out.join("scaling.csv"));
    }
    files
}
