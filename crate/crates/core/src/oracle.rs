//! Brute-force packet average of the squared amplitude.
//!
//! `V = int d^d p d^d k / (2 pi)^d rho(p, k) M(p + k/2) conj(M(p - k/2))`
//! over the relative state's density matrix, divided by the plane-wave value
//! `|M(<q>)|^2 rho_x(0)` (the same integral with `M = M(<q>)`).

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitudes::evaluate;
use crate::correction::{Prepared, ScatteringScenario};
use crate::error::{Error, Result};
use crate::packets::{density, moments, MomentumState, Vec2};
use crate::quad::{self, pairwise_sum, Bundle, Estimate, PANEL_ORDER};

/// Number of batches behind the Monte Carlo error estimate.
pub const MC_BATCHES: usize = 32;
/// Widening of the Monte Carlo proposal relative to the packet moments.
const PROPOSAL_INFLATION: f64 = 1.25;
/// Total node budget of the tensor rule.
const TENSOR_BUDGET: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    TensorQuadrature,
    MonteCarlo,
}

fn default_nodes() -> usize {
    32
}

fn default_samples() -> usize {
    200_000
}

fn default_target() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub method: OracleMethod,
    /// Starting nodes per axis of the tensor rule.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub seed: u64,
    /// Relative error target on the ratio.
    #[serde(default = "default_target")]
    pub target_rel_error: f64,
}

impl OracleConfig {
    pub fn quadrature(target_rel_error: f64) -> Self {
        Self { method: OracleMethod::TensorQuadrature, nodes: 32, samples: 0, seed: 0, target_rel_error }
    }

    pub fn monte_carlo(samples: usize, seed: u64, target_rel_error: f64) -> Self {
        Self { method: OracleMethod::MonteCarlo, nodes: 0, samples, seed, target_rel_error }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            OracleMethod::TensorQuadrature if self.nodes < 32 => {
                Err(Error::InvalidParameter(format!("quadrature needs >= 32 nodes per axis, got {}", self.nodes)))
            }
            OracleMethod::MonteCarlo if self.samples < 10_000 => {
                Err(Error::InvalidParameter(format!("Monte Carlo needs >= 10000 samples, got {}", self.samples)))
            }
            _ if !(self.target_rel_error > 0.0) => {
                Err(Error::InvalidParameter("target_rel_error must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilinearResult {
    /// Packet-averaged `|M|^2` (real part of `V`).
    pub value: f64,
    pub error: f64,
    /// `|M(<q>)|^2`.
    pub baseline: f64,
    /// `rho_x(0)`, the integral with `M = 1`.
    pub norm: f64,
    pub ratio: f64,
    pub ratio_error: f64,
    /// `|Im V| / |Re V|`.
    pub imag_residual: f64,
    pub evaluations: usize,
}

/// Amplitude along a fixed outgoing direction, relative to its value at
/// the mean momentum.
struct RelativeAmplitude<'a> {
    prepared: &'a Prepared,
    direction: [f64; 3],
    inverse_mean: Complex64,
    failure: OnceLock<Error>,
}

impl<'a> RelativeAmplitude<'a> {
    fn new(prepared: &'a Prepared, theta: f64, phi: f64) -> Result<Self> {
        let direction = crate::kinematics::direction(theta, phi);
        let (s, t) = prepared.collision.invariants(prepared.mean_q, direction);
        let mean = evaluate(&prepared.scenario.amplitude, s, t)?;
        Ok(Self { prepared, direction, inverse_mean: mean.inv(), failure: OnceLock::new() })
    }

    fn at(&self, q: Vec2) -> Complex64 {
        let (s, t) = self.prepared.collision.invariants(q, self.direction);
        match evaluate(&self.prepared.scenario.amplitude, s, t) {
            Ok(m) => m * self.inverse_mean,
            Err(e) => {
                let _ = self.failure.set(e);
                Complex64::new(0.0, 0.0)
            }
        }
    }

    /// `[rho M(p+k/2) conj(M(p-k/2)), rho]`, both without the `(2 pi)^-d`.
    fn integrand(&self, p: Vec2, k: Vec2) -> Bundle<Complex64, 2> {
        let rho = density(&self.prepared.relative, p, k);
        let plus = self.at([p[0] + 0.5 * k[0], p[1] + 0.5 * k[1]]);
        let minus = self.at([p[0] - 0.5 * k[0], p[1] - 0.5 * k[1]]);
        Bundle([rho * plus * minus.conj(), rho])
    }

    fn check(self) -> Result<()> {
        match self.failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

fn finish(
    prepared: &Prepared,
    theta: f64,
    phi: f64,
    sums: [Complex64; 2],
    ratio_error: f64,
    evaluations: usize,
) -> Result<BilinearResult> {
    let dim = prepared.relative.dim() as i32;
    let scale = (2.0 * std::f64::consts::PI).powi(-dim);
    let (s, t) = prepared.collision.invariants(prepared.mean_q, crate::kinematics::direction(theta, phi));
    let baseline = evaluate(&prepared.scenario.amplitude, s, t)?.norm_sqr();
    let [v, n] = sums;
    let norm = n.re * scale;
    let ratio = v.re / n.re;
    let value = v.re * scale * baseline;
    let error = ratio_error * norm * baseline;
    if value < -3.0 * error.max(f64::EPSILON * value.abs()) {
        return Err(Error::NegativeValueBeyondError { value, error });
    }
    Ok(BilinearResult {
        value,
        error,
        baseline,
        norm,
        ratio,
        ratio_error,
        imag_residual: v.im.abs() / v.re.abs(),
        evaluations,
    })
}

/// Packet-averaged bilinear for the outgoing direction `(theta, phi)`.
pub fn averaged_bilinear(prepared: &Prepared, theta: f64, phi: f64, config: &OracleConfig) -> Result<BilinearResult> {
    config.validate()?;
    match config.method {
        OracleMethod::TensorQuadrature => tensor_bilinear(prepared, theta, phi, config),
        OracleMethod::MonteCarlo => monte_carlo_bilinear(prepared, theta, phi, config),
    }
}

fn tensor_bilinear(prepared: &Prepared, theta: f64, phi: f64, config: &OracleConfig) -> Result<BilinearResult> {
    let amp = RelativeAmplitude::new(prepared, theta, phi)?;
    let dim = prepared.relative.dim();
    let support = prepared.relative.support();
    let mut bounds = Vec::with_capacity(2 * dim);
    bounds.extend_from_slice(&support[..dim]);
    for &(lo, hi) in &support[..dim] {
        bounds.push((lo - hi, hi - lo));
    }
    let unpack = |x: &[f64]| -> (Vec2, Vec2) {
        if dim == 1 {
            ([x[0], 0.0], [x[1], 0.0])
        } else {
            ([x[0], x[1]], [x[2], x[3]])
        }
    };
    let start = (config.nodes / PANEL_ORDER).max(2);
    let est: Result<Estimate<Bundle<Complex64, 2>>> =
        quad::integrate_with_budget(&bounds, start, config.target_rel_error, 0.0, TENSOR_BUDGET, &|x: &[f64]| {
            let (p, k) = unpack(x);
            amp.integrand(p, k)
        });
    amp.check()?;
    let est = est.map_err(|e| match e {
        Error::QuadratureNonConvergence { achieved, .. } => {
            Error::NonConvergence { target: config.target_rel_error, achieved }
        }
        other => other,
    })?;
    let [v, n] = est.value.0;
    let ratio_error = est.error / n.re.abs();
    let evaluations = est.nodes_per_axis.pow(bounds.len() as u32);
    finish(prepared, theta, phi, [v, n], ratio_error, evaluations)
}

fn monte_carlo_bilinear(prepared: &Prepared, theta: f64, phi: f64, config: &OracleConfig) -> Result<BilinearResult> {
    let amp = RelativeAmplitude::new(prepared, theta, phi)?;
    let dim = prepared.relative.dim();
    let m = moments(&prepared.relative)?;
    let mut p_width = [0.0; 2];
    for (w, var) in p_width.iter_mut().zip(m.covariance).take(dim) {
        *w = PROPOSAL_INFLATION * var.sqrt();
    }
    let base = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.samples;
    let samples: Vec<Bundle<Complex64, 2>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = base.clone();
            rng.set_stream(i as u64);
            let mut p = [0.0; 2];
            let mut k = [0.0; 2];
            let mut log_pdf = 0.0;
            for a in 0..dim {
                let (zp, zk): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                let k_width = 2.0 * p_width[a];
                p[a] = m.mean_p[a] + p_width[a] * zp;
                k[a] = k_width * zk;
                log_pdf -= 0.5 * (zp * zp + zk * zk) + (2.0 * std::f64::consts::PI * p_width[a] * k_width).ln();
            }
            amp.integrand(p, k) * (-log_pdf).exp()
        })
        .collect();
    amp.check()?;
    let batch = n / MC_BATCHES;
    let batches: Vec<Bundle<Complex64, 2>> =
        (0..MC_BATCHES).map(|b| pairwise_sum(&samples[b * batch..(b + 1) * batch])).collect();
    let used = batch * MC_BATCHES;
    let total = pairwise_sum(&batches);
    let [v, norm] = total.0;
    let ratio = v.re / norm.re;
    let ratios: Vec<f64> = batches.iter().map(|b| b.0[0].re / b.0[1].re).collect();
    let mean = pairwise_sum(&ratios) / MC_BATCHES as f64;
    let spread: Vec<f64> = ratios.iter().map(|r| (r - mean) * (r - mean)).collect();
    let variance = pairwise_sum(&spread) / (MC_BATCHES as f64 - 1.0);
    let ratio_error = (variance / MC_BATCHES as f64).sqrt();
    if !(ratio_error <= config.target_rel_error * ratio.abs()) {
        return Err(Error::NonConvergence { target: config.target_rel_error, achieved: ratio_error / ratio.abs() });
    }
    let scale = 1.0 / used as f64;
    finish(prepared, theta, phi, [v * scale, norm * scale], ratio_error, used)
}

/// One width of a scaling sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub sigma_ratio: f64,
    pub oracle_ratio: f64,
    pub oracle_error: f64,
    pub first_order_ratio: f64,
    pub evaluations: usize,
}

/// Least-squares fit `ratio - 1 = slope x + quadratic x^2`, `x = sigma_p / m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingProbe {
    pub slope: f64,
    pub slope_error: f64,
    pub quadratic: f64,
    pub quadratic_error: f64,
    /// `|quadratic| x_max / |slope|`: the quadratic term relative to the
    /// linear one at the widest packet.
    pub quadratic_fraction: f64,
    pub rows: Vec<ScalingRow>,
}

/// Fit `y = a x + c x^2` by least squares; returns `(a, c, err_a, err_c)`.
pub fn fit_linear_quadratic(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let (mut s2, mut s3, mut s4, mut sy1, mut sy2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        s2 += xi * xi;
        s3 += xi * xi * xi;
        s4 += xi * xi * xi * xi;
        sy1 += xi * yi;
        sy2 += xi * xi * yi;
    }
    let det = s2 * s4 - s3 * s3;
    let a = (s4 * sy1 - s3 * sy2) / det;
    let c = (s2 * sy2 - s3 * sy1) / det;
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let rss: f64 = x.iter().zip(y).map(|(&xi, &yi)| (yi - a * xi - c * xi * xi).powi(2)).sum();
    let var = rss / dof;
    (a, c, (var * s4 / det).sqrt(), (var * s2 / det).sqrt())
}

/// Oracle and first-order ratios across `sigma_p / m`, with the fit.
pub fn scaling_probe(
    scenario: &ScatteringScenario,
    sigma_ratios: &[f64],
    theta: f64,
    phi: f64,
    config: &OracleConfig,
) -> Result<ScalingProbe> {
    let lo = sigma_ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sigma_ratios.iter().copied().fold(0.0, f64::max);
    if sigma_ratios.len() < 4 || !(hi >= 10.0 * lo) {
        return Err(Error::InvalidParameter("scaling probe needs >= 4 widths spanning a decade".into()));
    }
    let mut rows = Vec::with_capacity(sigma_ratios.len());
    for &ratio in sigma_ratios {
        let prepared = scenario.with_sigma_ratio(ratio)?.prepare()?;
        let r = averaged_bilinear(&prepared, theta, phi, config)?;
        rows.push(ScalingRow {
            sigma_ratio: ratio,
            oracle_ratio: r.ratio,
            oracle_error: r.ratio_error,
            first_order_ratio: prepared.first_order_ratio(theta, phi)?,
            evaluations: r.evaluations,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.sigma_ratio).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.oracle_ratio - 1.0).collect();
    let (slope, quadratic, slope_error, quadratic_error) = fit_linear_quadratic(&x, &y);
    Ok(ScalingProbe {
        slope,
        slope_error,
        quadratic,
        quadratic_error,
        quadratic_fraction: quadratic.abs() * hi / slope.abs(),
        rows,
    })
}

/// `|oracle ratio - first-order ratio - 1|`.
pub fn wkb_remainder(prepared: &Prepared, theta: f64, phi: f64, config: &OracleConfig) -> Result<f64> {
    let oracle = averaged_bilinear(prepared, theta, phi, config)?;
    let first = prepared.first_order_ratio(theta, phi)?;
    Ok((oracle.ratio - first - 1.0).abs())
}
