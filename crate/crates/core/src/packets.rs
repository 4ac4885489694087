//! Momentum-space wave packets and their two-point density matrix.
//!
//! All packets are transverse (one or two axes). Amplitudes carry the shift
//! phase `exp(-i b.p)`, which places the packet centroid at position `b`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Bundle, Estimate, QuadValue};

pub type Vec2 = [f64; 2];

/// Envelope half-width, in units of sigma, treated as the packet support.
pub const SUPPORT_WIDTHS: f64 = 8.5;

/// Relative tolerance of the internal quadratures.
pub const QUAD_TOL: f64 = 1e-10;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Shape-specific parameters of a packet description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Gaussian,
    /// Ring of radius `kappa` around `mean_p` with OAM `ell`.
    Vortex {
        kappa: f64,
        ell: f64,
    },
    /// Cubic spectral phase `(xi (p - mean_p))^3 / 3` on every axis.
    Airy {
        xi: f64,
    },
    /// Superposition of Gaussians sharing the packet widths.
    Cat {
        components: Vec<CatComponent>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatComponent {
    /// Complex weight as `[re, im]`.
    pub weight: [f64; 2],
    /// Position displacement of this component.
    pub shift_b: Vec<f64>,
    /// Momentum offset added to the packet's `mean_p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_p: Option<Vec<f64>>,
}

/// Parameter set from which [`make_packet`] builds a [`WavePacket`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketSpec {
    pub dim: usize,
    pub mean_p: Vec<f64>,
    /// Momentum widths per axis.
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub shift_b: Vec<f64>,
    #[serde(flatten)]
    pub shape: ShapeSpec,
}

impl PacketSpec {
    pub fn gaussian(mean_p: &[f64], sigma: &[f64], shift_b: &[f64]) -> Self {
        Self {
            dim: mean_p.len(),
            mean_p: mean_p.to_vec(),
            sigma: sigma.to_vec(),
            shift_b: shift_b.to_vec(),
            shape: ShapeSpec::Gaussian,
        }
    }

    /// Two displaced Gaussians at `+-separation/2` along the first axis.
    pub fn symmetric_cat(dim: usize, sigma: f64, separation: f64, weights: [Complex64; 2]) -> Self {
        let mut plus = vec![0.0; dim];
        plus[0] = 0.5 * separation;
        let minus: Vec<f64> = plus.iter().map(|x| -x).collect();
        Self {
            dim,
            mean_p: vec![0.0; dim],
            sigma: vec![sigma; dim],
            shift_b: vec![0.0; dim],
            shape: ShapeSpec::Cat {
                components: vec![
                    CatComponent { weight: [weights[0].re, weights[0].im], shift_b: plus, mean_p: None },
                    CatComponent { weight: [weights[1].re, weights[1].im], shift_b: minus, mean_p: None },
                ],
            },
        }
    }

    pub fn with_shift(mut self, shift_b: &[f64]) -> Self {
        self.shift_b = shift_b.to_vec();
        self
    }

    /// Self-similar rescaling: momenta scale by `factor`, lengths by `1/factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let scale = |v: &[f64], f: f64| v.iter().map(|x| x * f).collect::<Vec<_>>();
        let shape = match &self.shape {
            ShapeSpec::Gaussian => ShapeSpec::Gaussian,
            ShapeSpec::Vortex { kappa, ell } => ShapeSpec::Vortex { kappa: kappa * factor, ell: *ell },
            ShapeSpec::Airy { xi } => ShapeSpec::Airy { xi: xi / factor },
            ShapeSpec::Cat { components } => ShapeSpec::Cat {
                components: components
                    .iter()
                    .map(|c| CatComponent {
                        weight: c.weight,
                        shift_b: scale(&c.shift_b, 1.0 / factor),
                        mean_p: c.mean_p.as_ref().map(|m| scale(m, factor)),
                    })
                    .collect(),
            },
        };
        Self {
            dim: self.dim,
            mean_p: scale(&self.mean_p, factor),
            sigma: scale(&self.sigma, factor),
            shift_b: scale(&self.shift_b, 1.0 / factor),
            shape,
        }
    }
}

/// A normalized transverse momentum-space state.
pub trait MomentumState: Sync {
    fn dim(&self) -> usize;
    fn amplitude(&self, p: Vec2) -> Complex64;
    /// Gradient of the amplitude with respect to momentum.
    fn gradient(&self, p: Vec2) -> [Complex64; 2];
    /// Per-axis interval outside which the amplitude is negligible.
    fn support(&self) -> [(f64, f64); 2];
    /// Positions around which the position density is concentrated.
    fn centres(&self) -> Vec<Vec2>;
    /// Centre of rotational structure; 2D integrals then use polar nodes.
    fn polar_centre(&self) -> Option<Vec2> {
        None
    }
    /// Short human-readable description.
    fn label(&self) -> String {
        String::from("state")
    }
}

#[derive(Debug, Clone, PartialEq)]
struct CatTerm {
    weight: Complex64,
    mean_p: Vec2,
    shift_b: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Gaussian,
    Vortex { kappa: f64, ell: i32 },
    Airy { xi: f64 },
    Cat { terms: Vec<CatTerm>, gauss_coeff: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WavePacket {
    spec: PacketSpec,
    dim: usize,
    mean_p: Vec2,
    sigma: Vec2,
    shift_b: Vec2,
    shape: Shape,
    coeff: f64,
    raw_norm_sq: f64,
}

fn to_vec2(v: &[f64]) -> Vec2 {
    let mut out = [0.0; 2];
    out[..v.len()].copy_from_slice(v);
    out
}

fn check_vector(name: &str, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::InvalidParameter(format!("{name} has {} components, expected {dim}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} must be finite")));
    }
    Ok(())
}

fn gaussian_coeff(sigma: Vec2, dim: usize) -> f64 {
    (0..dim).map(|a| (PI * sigma[a] * sigma[a]).powf(-0.25)).product()
}

/// Build and normalize a packet.
pub fn make_packet(spec: &PacketSpec) -> Result<WavePacket> {
    let dim = spec.dim;
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidParameter(format!("dim must be 1 or 2, got {dim}")));
    }
    check_vector("mean_p", &spec.mean_p, dim)?;
    check_vector("sigma", &spec.sigma, dim)?;
    let shift = if spec.shift_b.is_empty() { vec![0.0; dim] } else { spec.shift_b.clone() };
    check_vector("shift_b", &shift, dim)?;
    if let Some(s) = spec.sigma.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {s}")));
    }
    let mean_p = to_vec2(&spec.mean_p);
    let sigma = to_vec2(&spec.sigma);
    let shift_b = to_vec2(&shift);

    let shape = match &spec.shape {
        ShapeSpec::Gaussian => Shape::Gaussian,
        ShapeSpec::Vortex { kappa, ell } => {
            if dim != 2 {
                return Err(Error::InvalidParameter("vortex requires dim=2".into()));
            }
            if !(*kappa >= 0.0) || !kappa.is_finite() {
                return Err(Error::InvalidParameter(format!("kappa must be >= 0, got {kappa}")));
            }
            if ell.fract() != 0.0 || !ell.is_finite() || ell.abs() > i32::MAX as f64 {
                return Err(Error::InvalidParameter(format!("ell must be an integer, got {ell}")));
            }
            if sigma[0] != sigma[1] {
                return Err(Error::InvalidParameter("vortex requires equal sigma on both axes".into()));
            }
            Shape::Vortex { kappa: *kappa, ell: *ell as i32 }
        }
        ShapeSpec::Airy { xi } => {
            if !xi.is_finite() {
                return Err(Error::InvalidParameter("xi must be finite".into()));
            }
            Shape::Airy { xi: *xi }
        }
        ShapeSpec::Cat { components } => {
            if components.len() < 2 {
                return Err(Error::InvalidParameter("cat needs at least 2 components".into()));
            }
            let mut terms: Vec<CatTerm> = Vec::new();
            for (i, c) in components.iter().enumerate() {
                check_vector(&format!("components[{i}].shift_b"), &c.shift_b, dim)?;
                if let Some(m) = &c.mean_p {
                    check_vector(&format!("components[{i}].mean_p"), m, dim)?;
                }
                if !c.weight.iter().all(|w| w.is_finite()) {
                    return Err(Error::InvalidParameter(format!("components[{i}].weight must be finite")));
                }
                let offset = c.mean_p.as_deref().map(to_vec2).unwrap_or([0.0; 2]);
                let term = CatTerm {
                    weight: Complex64::new(c.weight[0], c.weight[1]),
                    mean_p: [mean_p[0] + offset[0], mean_p[1] + offset[1]],
                    shift_b: {
                        let s = to_vec2(&c.shift_b);
                        [s[0] + shift_b[0], s[1] + shift_b[1]]
                    },
                };
                // Coincident components merge into one.
                match terms.iter_mut().find(|t| t.mean_p == term.mean_p && t.shift_b == term.shift_b) {
                    Some(t) => t.weight += term.weight,
                    None => terms.push(term),
                }
            }
            terms.retain(|t| t.weight != Complex64::new(0.0, 0.0));
            if terms.is_empty() {
                return Err(Error::InvalidParameter("cat weights are all zero".into()));
            }
            if terms.len() == 1 && terms[0].weight.im == 0.0 && terms[0].weight.re > 0.0 {
                // Degenerate cat: a single Gaussian.
                let t = &terms[0];
                let collapsed = WavePacket {
                    spec: spec.clone(),
                    dim,
                    mean_p: t.mean_p,
                    sigma,
                    shift_b: t.shift_b,
                    shape: Shape::Gaussian,
                    coeff: gaussian_coeff(sigma, dim),
                    raw_norm_sq: 1.0,
                };
                return Ok(collapsed);
            }
            Shape::Cat { terms, gauss_coeff: gaussian_coeff(sigma, dim) }
        }
    };

    let mut packet =
        WavePacket { spec: spec.clone(), dim, mean_p, sigma, shift_b, shape, coeff: 1.0, raw_norm_sq: 1.0 };
    match packet.shape {
        Shape::Gaussian | Shape::Airy { .. } => {
            packet.coeff = gaussian_coeff(sigma, dim);
        }
        Shape::Vortex { kappa, .. } => {
            let s = sigma[0];
            let lo = (kappa - SUPPORT_WIDTHS * s).max(0.0);
            let hi = kappa + SUPPORT_WIDTHS * s;
            let est: Estimate<f64> = quad::integrate(&[(lo, hi)], 2, QUAD_TOL, 0.0, &|r: &[f64]| {
                let x = (r[0] - kappa) / s;
                (-x * x).exp() * r[0]
            })
            .map_err(|e| Error::NormalizationFailure(e.to_string()))?;
            packet.raw_norm_sq = 2.0 * PI * est.value;
            packet.coeff = packet.raw_norm_sq.sqrt().recip();
        }
        Shape::Cat { .. } => {
            let est = integrate_state(&packet, |p| packet.amplitude(p).norm_sqr())
                .map_err(|e| Error::NormalizationFailure(e.to_string()))?;
            if est.error > 1e-3 * est.value {
                return Err(Error::NormalizationFailure(format!(
                    "norm estimate unstable: {:e} +- {:e}",
                    est.value, est.error
                )));
            }
            if !(est.value > 0.0) {
                return Err(Error::NormalizationFailure("superposition has zero norm".into()));
            }
            packet.raw_norm_sq = est.value;
            packet.coeff = est.value.sqrt().recip();
        }
    }
    Ok(packet)
}

impl WavePacket {
    pub fn spec(&self) -> &PacketSpec {
        &self.spec
    }

    pub fn kind(&self) -> &'static str {
        match self.shape {
            Shape::Gaussian => "gaussian",
            Shape::Vortex { .. } => "vortex",
            Shape::Airy { .. } => "airy",
            Shape::Cat { .. } => "cat",
        }
    }

    pub fn mean_p(&self) -> Vec2 {
        self.mean_p
    }

    pub fn sigma(&self) -> Vec2 {
        self.sigma
    }

    pub fn shift_b(&self) -> Vec2 {
        self.shift_b
    }

    /// Squared norm of the unnormalized amplitude (1 for analytically
    /// normalized kinds).
    pub fn raw_norm_sq(&self) -> f64 {
        self.raw_norm_sq
    }

    /// True when the packet is invariant under `p -> -p`, `x -> -x`.
    pub fn is_parity_even(&self) -> bool {
        let zero = [0.0; 2];
        match &self.shape {
            Shape::Gaussian => self.mean_p == zero && self.shift_b == zero,
            Shape::Vortex { ell, .. } => self.mean_p == zero && self.shift_b == zero && ell % 2 == 0,
            Shape::Airy { xi } => *xi == 0.0 && self.mean_p == zero && self.shift_b == zero,
            Shape::Cat { terms, .. } => terms.iter().all(|t| {
                let mirror = [-t.shift_b[0], -t.shift_b[1]];
                let mirror_p = [-t.mean_p[0], -t.mean_p[1]];
                terms.iter().any(|u| u.shift_b == mirror && u.mean_p == mirror_p && u.weight == t.weight)
            }),
        }
    }

    fn shift_phase(&self, b: Vec2, p: Vec2) -> Complex64 {
        let arg = -(0..self.dim).map(|a| b[a] * p[a]).sum::<f64>();
        Complex64::from_polar(1.0, arg)
    }

    fn envelope_exponent(&self, centre: Vec2, p: Vec2) -> f64 {
        (0..self.dim)
            .map(|a| {
                let x = (p[a] - centre[a]) / self.sigma[a];
                -0.5 * x * x
            })
            .sum()
    }
}

impl MomentumState for WavePacket {
    fn dim(&self) -> usize {
        self.dim
    }

    fn amplitude(&self, p: Vec2) -> Complex64 {
        match &self.shape {
            Shape::Gaussian => {
                self.shift_phase(self.shift_b, p) * (self.coeff * self.envelope_exponent(self.mean_p, p).exp())
            }
            Shape::Vortex { kappa, ell } => {
                let dx = p[0] - self.mean_p[0];
                let dy = p[1] - self.mean_p[1];
                let rho = dx.hypot(dy);
                let x = (rho - kappa) / self.sigma[0];
                let angle = if *ell == 0 { 0.0 } else { *ell as f64 * dy.atan2(dx) };
                self.shift_phase(self.shift_b, p) * Complex64::from_polar(self.coeff * (-0.5 * x * x).exp(), angle)
            }
            Shape::Airy { xi } => {
                let cubic: f64 = (0..self.dim).map(|a| (xi * (p[a] - self.mean_p[a])).powi(3) / 3.0).sum();
                self.shift_phase(self.shift_b, p)
                    * Complex64::from_polar(self.coeff * self.envelope_exponent(self.mean_p, p).exp(), cubic)
            }
            Shape::Cat { terms, gauss_coeff } => {
                let sum = terms.iter().fold(Complex64::new(0.0, 0.0), |acc, t| {
                    acc + t.weight
                        * self.shift_phase(t.shift_b, p)
                        * (gauss_coeff * self.envelope_exponent(t.mean_p, p).exp())
                });
                sum * self.coeff
            }
        }
    }

    fn gradient(&self, p: Vec2) -> [Complex64; 2] {
        let mut g = [Complex64::new(0.0, 0.0); 2];
        match &self.shape {
            Shape::Gaussian | Shape::Airy { .. } => {
                let psi = self.amplitude(p);
                let xi = if let Shape::Airy { xi } = self.shape { xi } else { 0.0 };
                for a in 0..self.dim {
                    let d = p[a] - self.mean_p[a];
                    let log_grad =
                        Complex64::new(-d / (self.sigma[a] * self.sigma[a]), xi * xi * xi * d * d - self.shift_b[a]);
                    g[a] = psi * log_grad;
                }
            }
            Shape::Vortex { kappa, ell } => {
                let psi = self.amplitude(p);
                let dx = p[0] - self.mean_p[0];
                let dy = p[1] - self.mean_p[1];
                let rho = dx.hypot(dy);
                if rho > 0.0 {
                    let radial = -(rho - kappa) / (self.sigma[0] * self.sigma[0]);
                    let l = *ell as f64;
                    let drho = [dx / rho, dy / rho];
                    let dphi = [-dy / (rho * rho), dx / (rho * rho)];
                    for a in 0..2 {
                        g[a] = psi * Complex64::new(radial * drho[a], l * dphi[a] - self.shift_b[a]);
                    }
                }
            }
            Shape::Cat { terms, gauss_coeff } => {
                for t in terms {
                    let term = t.weight
                        * self.shift_phase(t.shift_b, p)
                        * (gauss_coeff * self.coeff * self.envelope_exponent(t.mean_p, p).exp());
                    for a in 0..self.dim {
                        let d = p[a] - t.mean_p[a];
                        g[a] += term * Complex64::new(-d / (self.sigma[a] * self.sigma[a]), -t.shift_b[a]);
                    }
                }
            }
        }
        g
    }

    fn support(&self) -> [(f64, f64); 2] {
        let mut out = [(0.0, 0.0); 2];
        let radius = match self.shape {
            Shape::Vortex { kappa, .. } => kappa,
            _ => 0.0,
        };
        let centres: Vec<Vec2> = match &self.shape {
            Shape::Cat { terms, .. } => terms.iter().map(|t| t.mean_p).collect(),
            _ => vec![self.mean_p],
        };
        for a in 0..self.dim {
            let half = radius + SUPPORT_WIDTHS * self.sigma[a];
            let lo = centres.iter().map(|c| c[a]).fold(f64::INFINITY, f64::min) - half;
            let hi = centres.iter().map(|c| c[a]).fold(f64::NEG_INFINITY, f64::max) + half;
            out[a] = (lo, hi);
        }
        out
    }

    fn polar_centre(&self) -> Option<Vec2> {
        match self.shape {
            Shape::Vortex { .. } => Some(self.mean_p),
            _ => None,
        }
    }

    fn label(&self) -> String {
        let d = self.dim;
        let fmt = |v: Vec2| format!("{:?}", &v[..d]);
        let extra = match &self.shape {
            Shape::Gaussian => String::new(),
            Shape::Vortex { kappa, ell } => format!(" kappa={kappa} ell={ell}"),
            Shape::Airy { xi } => format!(" xi={xi}"),
            Shape::Cat { terms, .. } => format!(" components={}", terms.len()),
        };
        format!(
            "{} dim={d} mean_p={} sigma={} shift_b={}{extra}",
            self.kind(),
            fmt(self.mean_p),
            fmt(self.sigma),
            fmt(self.shift_b)
        )
    }

    fn centres(&self) -> Vec<Vec2> {
        match &self.shape {
            Shape::Cat { terms, .. } => terms.iter().map(|t| t.shift_b).collect(),
            _ => vec![self.shift_b],
        }
    }
}

/// Value of the normalized packet amplitude.
pub fn amplitude(packet: &impl MomentumState, p: Vec2) -> Complex64 {
    packet.amplitude(p)
}

/// Two-point density matrix `psi(p + k/2) conj(psi(p - k/2))`.
pub fn density(state: &impl MomentumState, p: Vec2, k: Vec2) -> Complex64 {
    let plus = [p[0] + 0.5 * k[0], p[1] + 0.5 * k[1]];
    let minus = [p[0] - 0.5 * k[0], p[1] - 0.5 * k[1]];
    state.amplitude(plus) * state.amplitude(minus).conj()
}

/// A [`MomentumState`] together with its density evaluator.
pub struct BilinearDensity<'a, S: MomentumState> {
    pub source: &'a S,
}

impl<'a, S: MomentumState> BilinearDensity<'a, S> {
    pub fn new(source: &'a S) -> Self {
        Self { source }
    }

    pub fn eval(&self, p: Vec2, k: Vec2) -> Complex64 {
        density(self.source, p, k)
    }
}

/// Integrate `f` over the state's momentum support.
pub fn integrate_state<S, T, F>(state: &S, f: F) -> Result<Estimate<T>>
where
    S: MomentumState + ?Sized,
    T: QuadValue,
    F: Fn(Vec2) -> T + Sync,
{
    let support = state.support();
    integrate_region(&support[..state.dim()], state.polar_centre(), 1e-300, &|x: &[f64]| f(to_vec2(x)))
}

/// Cartesian tensor rule over `bounds`, or polar nodes around `centre` in 2D.
fn integrate_region<T, F>(bounds: &[(f64, f64)], centre: Option<Vec2>, abs_tol: f64, f: &F) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: Fn(&[f64]) -> T + Sync,
{
    match centre {
        Some(c) if bounds.len() == 2 => {
            let r_max = [bounds[0].0, bounds[0].1]
                .iter()
                .flat_map(|&x| [bounds[1].0, bounds[1].1].map(|y| (x - c[0]).hypot(y - c[1])))
                .fold(0.0, f64::max);
            quad::polar_integrate(c, r_max, 2, QUAD_TOL, abs_tol, f)
        }
        _ => quad::integrate(bounds, 2, QUAD_TOL, abs_tol, f),
    }
}

fn union_support(a: &impl MomentumState, b: &impl MomentumState) -> Vec<(f64, f64)> {
    let (sa, sb) = (a.support(), b.support());
    (0..a.dim()).map(|i| (sa[i].0.min(sb[i].0), sa[i].1.max(sb[i].1))).collect()
}

/// `<a|b> = int conj(psi_a) psi_b d^d p`.
pub fn overlap(a: &impl MomentumState, b: &impl MomentumState) -> Result<Complex64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidParameter(format!("overlap of packets with dim {} and {}", a.dim(), b.dim())));
    }
    let bounds = union_support(a, b);
    let centre = a.polar_centre().or_else(|| b.polar_centre());
    let est: Estimate<Complex64> = integrate_region(&bounds, centre, 1e-14, &|x: &[f64]| {
        let p = to_vec2(x);
        a.amplitude(p).conj() * b.amplitude(p)
    })?;
    Ok(est.value)
}

/// First and second momentum moments and the mean position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_p: Vec2,
    /// Diagonal of the momentum covariance.
    pub covariance: Vec2,
    /// Centroid of the position density (Wigner-function centroid in r).
    pub mean_position: Vec2,
}

pub fn moments(state: &impl MomentumState) -> Result<Moments> {
    let est: Estimate<Bundle<f64, 7>> = integrate_state(state, |p| {
        let psi = state.amplitude(p);
        let w = psi.norm_sqr();
        let g = state.gradient(p);
        // x = i d/dp in the momentum representation.
        let x0 = (psi.conj() * I * g[0]).re;
        let x1 = (psi.conj() * I * g[1]).re;
        Bundle([w, w * p[0], w * p[1], w * p[0] * p[0], w * p[1] * p[1], x0, x1])
    })?;
    let [n, m0, m1, s0, s1, x0, x1] = est.value.0;
    let mean = [m0 / n, m1 / n];
    let mut out = Moments {
        mean_p: mean,
        covariance: [s0 / n - mean[0] * mean[0], s1 / n - mean[1] * mean[1]],
        mean_position: [x0 / n, x1 / n],
    };
    if state.dim() == 1 {
        out.mean_p[1] = 0.0;
        out.covariance[1] = 0.0;
        out.mean_position[1] = 0.0;
    }
    Ok(out)
}

/// Position-space amplitude `(2 pi)^{-d/2} int psi(p) exp(i p.x) d^d p`
/// together with its gradient.
pub fn position_amplitude(state: &impl MomentumState, x: Vec2) -> Result<(Complex64, [Complex64; 2])> {
    let dim = state.dim();
    let support = state.support();
    // int |psi| <= sqrt(volume), so this floor is relative to the largest
    // attainable value.
    let volume: f64 = support[..dim].iter().map(|(lo, hi)| hi - lo).product();
    let abs_tol = 1e-13 * volume.sqrt();
    let est: Estimate<Bundle<Complex64, 3>> =
        integrate_region(&support[..dim], state.polar_centre(), abs_tol, &|q: &[f64]| {
            let p = to_vec2(q);
            let phase = Complex64::from_polar(1.0, (0..dim).map(|a| p[a] * x[a]).sum());
            let v = state.amplitude(p) * phase;
            Bundle([v, v * I * p[0], v * I * p[1]])
        })?;
    let norm = (2.0 * PI).powf(-(dim as f64) / 2.0);
    let [v, g0, g1] = est.value.0;
    Ok((v * norm, [g0 * norm, g1 * norm]))
}

/// `|psi(x)|^2`, equal to the momentum integral of the Wigner function.
pub fn position_density(state: &impl MomentumState, x: Vec2) -> Result<f64> {
    Ok(position_amplitude(state, x)?.0.norm_sqr())
}

/// Squared magnitudes of the angular harmonics `exp(i l phi)` of the
/// amplitude on a ring of radius `radius` around `centre`, for
/// `l = 0, 1, ..., n/2 - 1, -n/2, ..., -1` (FFT order), normalized to sum to 1.
pub fn oam_spectrum(state: &impl MomentumState, centre: Vec2, radius: f64, n: usize) -> Vec<f64> {
    let mut samples: Vec<Complex64> = (0..n)
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / n as f64;
            state.amplitude([centre[0] + radius * phi.cos(), centre[1] + radius * phi.sin()])
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut samples);
    let power: Vec<f64> = samples.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    power.into_iter().map(|p| p / total).collect()
}

/// Relative-coordinate state of two colliding packets.
///
/// Particle 1 carries transverse momentum `q` and particle 2 carries `-q`
/// (total transverse momentum treated as sharp); the impact parameter adds
/// the phase `exp(-i b.q)`.
#[derive(Debug, Clone)]
pub struct RelativeState {
    first: WavePacket,
    second: WavePacket,
    impact: Vec2,
    coeff: f64,
    support: [(f64, f64); 2],
}

impl RelativeState {
    pub fn new(first: WavePacket, second: WavePacket, impact: &[f64]) -> Result<Self> {
        if first.dim != second.dim {
            return Err(Error::InvalidParameter("packets have different dim".into()));
        }
        let dim = first.dim;
        check_vector("impact parameter", impact, dim)?;
        let (s1, s2) = (first.support(), second.support());
        let mut support = [(0.0, 0.0); 2];
        for a in 0..dim {
            let lo = s1[a].0.max(-s2[a].1);
            let hi = s1[a].1.min(-s2[a].0);
            if !(lo < hi) {
                return Err(Error::InvalidParameter("packets do not overlap in momentum".into()));
            }
            support[a] = (lo, hi);
        }
        let mut state = Self { first, second, impact: to_vec2(impact), coeff: 1.0, support };
        let est = integrate_state(&state, |p| state.amplitude(p).norm_sqr())
            .map_err(|e| Error::NormalizationFailure(e.to_string()))?;
        if !(est.value > 0.0) {
            return Err(Error::NormalizationFailure("relative state has zero norm".into()));
        }
        state.coeff = est.value.sqrt().recip();
        Ok(state)
    }

    pub fn first(&self) -> &WavePacket {
        &self.first
    }

    pub fn second(&self) -> &WavePacket {
        &self.second
    }

    pub fn impact(&self) -> Vec2 {
        self.impact
    }

    fn impact_phase(&self, q: Vec2) -> Complex64 {
        Complex64::from_polar(1.0, -(0..self.first.dim).map(|a| self.impact[a] * q[a]).sum::<f64>())
    }
}

impl MomentumState for RelativeState {
    fn dim(&self) -> usize {
        self.first.dim
    }

    fn amplitude(&self, q: Vec2) -> Complex64 {
        let mirrored = [-q[0], -q[1]];
        self.first.amplitude(q) * self.second.amplitude(mirrored) * self.impact_phase(q) * self.coeff
    }

    fn gradient(&self, q: Vec2) -> [Complex64; 2] {
        let mirrored = [-q[0], -q[1]];
        let (a, b) = (self.first.amplitude(q), self.second.amplitude(mirrored));
        let (ga, gb) = (self.first.gradient(q), self.second.gradient(mirrored));
        let phase = self.impact_phase(q) * self.coeff;
        let mut g = [Complex64::new(0.0, 0.0); 2];
        for i in 0..self.dim() {
            g[i] = (ga[i] * b - a * gb[i] - I * self.impact[i] * a * b) * phase;
        }
        g
    }

    fn support(&self) -> [(f64, f64); 2] {
        self.support
    }

    fn label(&self) -> String {
        format!("relative[{} | {}] b={:?}", self.first.label(), self.second.label(), &self.impact[..self.dim()])
    }

    fn polar_centre(&self) -> Option<Vec2> {
        self.first.polar_centre().or_else(|| self.second.polar_centre().map(|c| [-c[0], -c[1]]))
    }

    fn centres(&self) -> Vec<Vec2> {
        let mut out = Vec::new();
        for c1 in self.first.centres() {
            for c2 in self.second.centres() {
                out.push([c1[0] - c2[0] + self.impact[0], c1[1] - c2[1] + self.impact[1]]);
            }
        }
        out
    }
}
