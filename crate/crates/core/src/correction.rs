//! First-order non-plane-wave correction and the azimuthal asymmetry.
//!
//! Expanding the amplitude phase to first order in the momentum offsets of
//! the bilinear `M(p + k/2) conj(M(p - k/2))` turns the k-integral into the
//! Wigner function at the shifted position `r = u`, with `u = d zeta / d p`.
//! The relative correction to the plane-wave rate is then
//! `u . grad ln rho_x(0)`, where `rho_x` is the position density of the
//! relative state at the collision point.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::amplitudes::{evaluate, phase_gradient, plane_wave_dsigma_dt, AmplitudeModel};
use crate::error::{Error, Result};
use crate::kinematics::{paraxiality, Collision, ParaxialityReport};
use crate::oracle::{averaged_bilinear, OracleConfig};
use crate::packets::{
    make_packet, moments, position_amplitude, position_density, MomentumState, PacketSpec, RelativeState, Vec2,
};

fn default_phi_bins() -> usize {
    16
}

/// Two packets colliding head-on along z in the centre-of-mass frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatteringScenario {
    pub m1: f64,
    pub m2: f64,
    pub sqrt_s: f64,
    pub first: PacketSpec,
    pub second: PacketSpec,
    /// Transverse impact parameter of particle 1 relative to particle 2.
    pub impact: Vec<f64>,
    pub amplitude: AmplitudeModel,
    #[serde(default)]
    pub thetas: Vec<f64>,
    #[serde(default = "default_phi_bins")]
    pub phi_bins: usize,
    /// Azimuth of the first bin edge; also the axis that splits the two
    /// hemispheres of the asymmetry.
    #[serde(default)]
    pub phi_offset: f64,
}

impl ScatteringScenario {
    /// Position width `1/sigma` of particle 1 along the first axis.
    pub fn sigma_x(&self) -> f64 {
        1.0 / self.first.sigma[0]
    }

    /// `sigma_p / m1` of particle 1.
    pub fn sigma_ratio(&self) -> f64 {
        self.first.sigma[0] / self.m1
    }

    /// Same geometry with both packets rescaled so that `sigma_p / m1 =
    /// ratio`; lengths, including the impact parameter, shrink accordingly.
    pub fn with_sigma_ratio(&self, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0) || !ratio.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma ratio must be positive, got {ratio}")));
        }
        let factor = ratio * self.m1 / self.first.sigma[0];
        Ok(Self {
            first: self.first.rescaled(factor),
            second: self.second.rescaled(factor),
            impact: self.impact.iter().map(|b| b / factor).collect(),
            ..self.clone()
        })
    }

    pub fn with_impact(&self, impact: &[f64]) -> Self {
        Self { impact: impact.to_vec(), ..self.clone() }
    }

    pub fn with_amplitude(&self, amplitude: AmplitudeModel) -> Self {
        Self { amplitude, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m1 > 0.0) || !(self.m2 >= 0.0) {
            return Err(Error::InvalidParameter("masses must satisfy m1 > 0, m2 >= 0".into()));
        }
        if self.phi_bins < 8 || !self.phi_bins.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("phi_bins must be even and >= 8, got {}", self.phi_bins)));
        }
        if !self.phi_offset.is_finite() {
            return Err(Error::InvalidParameter("phi_offset must be finite".into()));
        }
        if let Some(t) = self.thetas.iter().find(|t| !(**t > 0.0 && **t < PI)) {
            return Err(Error::InvalidParameter(format!("theta must lie in (0, pi), got {t}")));
        }
        self.amplitude.validate()
    }

    pub fn prepare(&self) -> Result<Prepared> {
        Prepared::new(self.clone())
    }
}

/// A scenario with its relative state and collision-point data computed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: ScatteringScenario,
    pub collision: Collision,
    pub relative: RelativeState,
    /// Mean relative transverse momentum.
    pub mean_q: Vec2,
    /// `grad ln rho_x` at the collision point.
    pub log_gradient: Vec2,
    /// Local wave vector `Im(grad psi_x / psi_x)` at the collision point;
    /// nonzero for states carrying a transverse current, e.g. vortices.
    pub local_wavevector: Vec2,
    /// `rho_x` at the collision point and at its largest centre.
    pub origin_density: f64,
    pub peak_density: f64,
}

impl Prepared {
    pub fn new(scenario: ScatteringScenario) -> Result<Self> {
        scenario.validate()?;
        let first = make_packet(&scenario.first)?;
        let second = make_packet(&scenario.second)?;
        let relative = RelativeState::new(first, second, &scenario.impact)?;
        let collision = Collision::from_sqrt_s(scenario.sqrt_s, scenario.m1, scenario.m2)?;
        let dim = relative.dim();
        let mean_q = moments(&relative)?.mean_p;
        let (psi, grad) = position_amplitude(&relative, [0.0; 2])?;
        let origin_density = psi.norm_sqr();
        let mut log_gradient = [0.0; 2];
        let mut local_wavevector = [0.0; 2];
        if origin_density > 0.0 {
            for a in 0..dim {
                log_gradient[a] = 2.0 * (grad[a] / psi).re;
                local_wavevector[a] = (grad[a] / psi).im;
            }
        }
        let mut peak_density = origin_density;
        for c in relative.centres() {
            peak_density = peak_density.max(position_density(&relative, c)?);
        }
        Ok(Self { scenario, collision, relative, mean_q, log_gradient, local_wavevector, origin_density, peak_density })
    }

    fn outgoing(theta: f64, transverse: Vec2) -> [f64; 3] {
        let (st, ct) = theta.sin_cos();
        [st * transverse[0], st * transverse[1], ct]
    }

    /// `(s, t)` at the mean kinematics.
    pub fn mean_invariants(&self, theta: f64, phi: f64) -> (f64, f64) {
        let (sp, cp) = phi.sin_cos();
        self.collision.invariants(self.mean_q, Self::outgoing(theta, [cp, sp]))
    }

    /// `u = d zeta / d q` at the mean kinematics.
    fn phase_slope(&self, theta: f64, transverse: Vec2) -> Result<Vec2> {
        let n = Self::outgoing(theta, transverse);
        let (s, t) = self.collision.invariants(self.mean_q, n);
        let (zs, zt) = phase_gradient(&self.scenario.amplitude, s, t)?;
        let (ds, dt) = self.collision.invariant_gradients(self.mean_q, n);
        Ok([ds[0] * zs + dt[0] * zt, ds[1] * zs + dt[1] * zt])
    }

    fn check_gradient(&self) -> Result<()> {
        let ratio = if self.peak_density > 0.0 { self.origin_density / self.peak_density } else { 0.0 };
        if !(ratio >= 1e-12) {
            return Err(Error::WignerGradientUnstable { ratio });
        }
        Ok(())
    }

    fn ratio_along(&self, theta: f64, transverse: Vec2) -> Result<f64> {
        self.check_gradient()?;
        let u = self.phase_slope(theta, transverse)?;
        let g = self.log_gradient;
        Ok(u[0] * g[0] + u[1] * g[1])
    }

    /// `d sigma^(1) / d sigma^(pw)` for the outgoing direction `(theta, phi)`.
    pub fn first_order_ratio(&self, theta: f64, phi: f64) -> Result<f64> {
        let (sp, cp) = phi.sin_cos();
        self.ratio_along(theta, [cp, sp])
    }

    /// First-order term from the variation of `|M|` across the packet,
    /// `2 grad ln|M| . k_loc`, which the phase-only ratio leaves out. It
    /// vanishes for states without a local current at the collision point
    /// (Gaussians, cats with real weights) but is of the same order as the
    /// phase term for vortices.
    pub fn modulus_term(&self, theta: f64, phi: f64) -> Result<f64> {
        self.check_gradient()?;
        let (sp, cp) = phi.sin_cos();
        let n = Self::outgoing(theta, [cp, sp]);
        let log_modulus = |q: Vec2| -> Result<f64> {
            let (s, t) = self.collision.invariants(q, n);
            Ok(evaluate(&self.scenario.amplitude, s, t)?.norm().ln())
        };
        let h = 1e-5 * self.collision.pz;
        let mut term = 0.0;
        for a in 0..self.relative.dim() {
            let (mut plus, mut minus) = (self.mean_q, self.mean_q);
            plus[a] += h;
            minus[a] -= h;
            let slope = (log_modulus(plus)? - log_modulus(minus)?) / (2.0 * h);
            term += 2.0 * slope * self.local_wavevector[a];
        }
        Ok(term)
    }

    pub fn plane_wave_dsigma_dt(&self, theta: f64, phi: f64) -> Result<f64> {
        let (s, t) = self.mean_invariants(theta, phi);
        plane_wave_dsigma_dt(&self.scenario.amplitude, s, t, self.scenario.m1, self.scenario.m2)
    }

    /// Centres of the azimuthal bins with their transverse unit vectors; the
    /// second half are exact negatives of the first.
    pub fn phi_bins(&self) -> Vec<(f64, Vec2)> {
        let n = self.scenario.phi_bins;
        let half = n / 2;
        let mut out = Vec::with_capacity(n);
        for j in 0..half {
            let phi = self.scenario.phi_offset + 2.0 * PI * (j as f64 + 0.5) / n as f64;
            let (sp, cp) = phi.sin_cos();
            out.push((phi, [cp, sp]));
        }
        for j in 0..half {
            let (phi, v) = out[j];
            out.push((phi + PI, [-v[0], -v[1]]));
        }
        out
    }

    pub fn effective_dipole(&self) -> Result<Vec2> {
        let x1 = moments(self.relative.first())?.mean_position;
        let x2 = moments(self.relative.second())?.mean_position;
        let b = self.relative.impact();
        Ok([x1[0] - x2[0] + b[0], x1[1] - x2[1] + b[1]])
    }

    fn is_degenerate(&self) -> Result<bool> {
        let symmetric = self.relative.first().is_parity_even()
            && self.relative.second().is_parity_even()
            && self.relative.impact() == [0.0; 2];
        if !symmetric {
            return Ok(false);
        }
        let d = self.effective_dipole()?;
        Ok(d[0].hypot(d[1]) <= 1e-12 * self.scenario.sigma_x())
    }

    pub fn azimuthal_asymmetry(&self, theta: f64) -> Result<Asymmetry> {
        let degenerate = self.is_degenerate()?;
        let bins = self.phi_bins();
        let mut table = Vec::with_capacity(bins.len());
        for &(phi, v) in &bins {
            let n = Self::outgoing(theta, v);
            let (s, t) = self.collision.invariants(self.mean_q, n);
            let dsigma = plane_wave_dsigma_dt(&self.scenario.amplitude, s, t, self.scenario.m1, self.scenario.m2)?;
            let ratio = if degenerate { 0.0 } else { self.ratio_along(theta, v)? };
            table.push(AsymmetryBin { phi, dsigma_dt: dsigma, first_order_ratio: ratio });
        }
        let (offset_s, offset_c) = self.scenario.phi_offset.sin_cos();
        let half = bins.len() / 2;
        let (mut diff_pw, mut diff_corr, mut sum_pw, mut sum_corr) = (0.0, 0.0, 0.0, 0.0);
        // Antipodal bins are paired so that b -> -b negates the result exactly.
        for j in 0..half {
            let (a, b) = (&table[j], &table[j + half]);
            let v = bins[j].1;
            let side = if v[0] * offset_c + v[1] * offset_s > 0.0 { 1.0 } else { -1.0 };
            let (wa, wb) = (a.dsigma_dt * a.first_order_ratio, b.dsigma_dt * b.first_order_ratio);
            diff_pw += side * (a.dsigma_dt - b.dsigma_dt);
            diff_corr += side * (wa - wb);
            sum_pw += a.dsigma_dt + b.dsigma_dt;
            sum_corr += wa + wb;
        }
        let value = if degenerate { 0.0 } else { (diff_pw + diff_corr) / (sum_pw + sum_corr) };
        Ok(Asymmetry { theta, value, degenerate, bins: table })
    }

    /// Asymmetry with the phase-gradient scale set by the atom size `a`:
    /// the log phase is screened and normalized at `mu^2 = 1/a^2`.
    pub fn atom_scale_asymmetry(&self, theta: f64, atom_size: f64) -> Result<AtomScale> {
        if !(atom_size > 0.0) {
            return Err(Error::InvalidParameter(format!("atom size must be positive, got {atom_size}")));
        }
        let (eta, norm, power) = match self.scenario.amplitude {
            AmplitudeModel::LogPhase { eta, norm, power, .. } => (eta, norm, power),
            _ => return Err(Error::InvalidParameter("atom-scale asymmetry needs a log_phase amplitude".into())),
        };
        let mu_sq = 1.0 / (atom_size * atom_size);
        let model = AmplitudeModel::LogPhase { norm, power, eta, lambda_sq: mu_sq, screening_sq: mu_sq };
        let screened = Prepared { scenario: self.scenario.with_amplitude(model), ..self.clone() };
        let asymmetry = screened.azimuthal_asymmetry(theta)?;
        Ok(AtomScale { asymmetry, scale: atom_size / self.scenario.sigma_x(), screening_sq: mu_sq })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryBin {
    pub phi: f64,
    pub dsigma_dt: f64,
    pub first_order_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asymmetry {
    pub theta: f64,
    /// Positive when the hemisphere along the reference axis dominates.
    pub value: f64,
    /// Symmetric in-state with zero dipole; `value` is then 0 by definition.
    pub degenerate: bool,
    pub bins: Vec<AsymmetryBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomScale {
    pub asymmetry: Asymmetry,
    /// `a / sigma_x`.
    pub scale: f64,
    pub screening_sq: f64,
}

pub fn effective_dipole(scenario: &ScatteringScenario) -> Result<Vec2> {
    scenario.prepare()?.effective_dipole()
}

pub fn first_order_ratio(scenario: &ScatteringScenario, theta: f64, phi: f64) -> Result<f64> {
    scenario.prepare()?.first_order_ratio(theta, phi)
}

pub fn azimuthal_asymmetry(scenario: &ScatteringScenario, theta: f64) -> Result<Asymmetry> {
    scenario.prepare()?.azimuthal_asymmetry(theta)
}

pub fn atom_scale_asymmetry(scenario: &ScatteringScenario, theta: f64, atom_size: f64) -> Result<AtomScale> {
    scenario.prepare()?.atom_scale_asymmetry(theta, atom_size)
}

/// One `(theta, phi)` bin of a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub theta: f64,
    pub phi: f64,
    pub dsigma_dt: f64,
    pub first_order_ratio: f64,
    /// See [`Prepared::modulus_term`]; not part of `first_order_ratio`.
    pub modulus_term: f64,
    pub oracle_ratio: Option<f64>,
    pub oracle_err: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetrySummary {
    pub theta: f64,
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub bins: Vec<BinRow>,
    pub asymmetries: Vec<AsymmetrySummary>,
    pub effective_dipole: Vec2,
    pub paraxiality: [ParaxialityReport; 2],
    pub provenance: Provenance,
}

impl CorrectionReport {
    /// Per-bin tables, asymmetries and paraxiality for every scenario angle;
    /// the oracle column is filled when `oracle` is given.
    pub fn build(prepared: &Prepared, oracle: Option<&OracleConfig>, atom_size: Option<f64>) -> Result<Self> {
        let sc = &prepared.scenario;
        let mut bins = Vec::new();
        let mut asymmetries = Vec::new();
        for &theta in &sc.thetas {
            let asym = prepared.azimuthal_asymmetry(theta)?;
            for bin in &asym.bins {
                let (oracle_ratio, oracle_err) = match oracle {
                    Some(cfg) => {
                        let r = averaged_bilinear(prepared, theta, bin.phi, cfg)?;
                        (Some(r.ratio), Some(r.ratio_error))
                    }
                    None => (None, None),
                };
                bins.push(BinRow {
                    theta,
                    phi: bin.phi,
                    dsigma_dt: bin.dsigma_dt,
                    first_order_ratio: bin.first_order_ratio,
                    modulus_term: prepared.modulus_term(theta, bin.phi)?,
                    oracle_ratio,
                    oracle_err,
                });
            }
            asymmetries.push(AsymmetrySummary { theta, value: asym.value, degenerate: asym.degenerate });
        }
        let pz = prepared.collision.pz;
        let paraxiality = [
            paraxiality(sc.m1, sc.first.sigma[0], pz, atom_size)?,
            paraxiality(sc.m2.max(f64::MIN_POSITIVE), sc.second.sigma[0], pz, atom_size)?,
        ];
        Ok(Self {
            bins,
            asymmetries,
            effective_dipole: prepared.effective_dipole()?,
            paraxiality,
            provenance: Provenance { config_hash: None, seed: oracle.map(|c| c.seed) },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::nm_to_natural;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;

    const ME: f64 = 0.51099895;

    /// Two electrons with 300 keV kinetic energy each, 1D transverse.
    pub(crate) fn electrons(sigma_ratio: f64, b_over_sigma_x: f64, model: AmplitudeModel) -> ScatteringScenario {
        let sigma = sigma_ratio * ME;
        let e = ME + 0.3;
        ScatteringScenario {
            m1: ME,
            m2: ME,
            sqrt_s: 2.0 * e,
            first: PacketSpec::gaussian(&[0.0], &[sigma], &[0.0]),
            second: PacketSpec::gaussian(&[0.0], &[sigma], &[0.0]),
            impact: vec![b_over_sigma_x / sigma],
            amplitude: model,
            thetas: vec![PI / 2.0],
            phi_bins: 16,
            phi_offset: 0.0,
        }
    }

    #[test]
    fn gaussian_ratio_matches_closed_form() {
        let sc = electrons(1e-3, 1.0, AmplitudeModel::log_phase(1.0));
        let prep = sc.prepare().unwrap();
        let theta = 1.1;
        let sigma = 1e-3 * ME;
        let p = prep.collision.pz;
        // Relative width sigma/sqrt(2): grad ln rho_x(0) = 2 b sigma^2 / 2 = sigma.
        let expected = -(1.0 / (theta / 2.0f64).tan()) * sigma / p;
        assert_relative_eq!(prep.first_order_ratio(theta, 0.0).unwrap(), expected, max_relative = 1e-6);
        assert_relative_eq!(prep.first_order_ratio(theta, PI / 3.0).unwrap(), expected * 0.5, max_relative = 1e-6);
    }

    #[test]
    fn null_results() {
        let constant = electrons(1e-3, 1.0, AmplitudeModel::constant_phase(0.3));
        let prep = constant.prepare().unwrap();
        for phi in [0.0, 1.0, 2.5] {
            assert_eq!(prep.first_order_ratio(0.8, phi).unwrap(), 0.0);
        }
        assert!(prep.azimuthal_asymmetry(0.8).unwrap().value.abs() < 1e-12);

        let centred = electrons(1e-3, 0.0, AmplitudeModel::log_phase(1.0)).prepare().unwrap();
        for phi in [0.0, 1.0, 2.5] {
            assert!(centred.first_order_ratio(0.8, phi).unwrap().abs() < 1e-12);
        }
        let asym = centred.azimuthal_asymmetry(0.8).unwrap();
        assert!(asym.degenerate);
        assert_eq!(asym.value, 0.0);
    }

    #[test]
    fn impact_reversal_flips_asymmetry_exactly() {
        let sc = electrons(3.9e-3, 1.0, AmplitudeModel::log_phase(1.0));
        let a = sc.prepare().unwrap().azimuthal_asymmetry(PI / 2.0).unwrap();
        let b = sc.with_impact(&[-sc.impact[0]]).prepare().unwrap().azimuthal_asymmetry(PI / 2.0).unwrap();
        assert!(a.value != 0.0);
        assert_eq!(a.value, -b.value);
    }

    #[test]
    fn electron_scale_asymmetry_is_per_mille() {
        let sc = electrons(3.9e-3, 1.0, AmplitudeModel::log_phase(1.0));
        let a = sc.prepare().unwrap().azimuthal_asymmetry(PI / 2.0).unwrap();
        assert!(a.value.abs() > 1e-4 && a.value.abs() < 1e-2, "{}", a.value);
        assert!(a.value.abs() <= 1.0);
    }

    #[test]
    fn dipole_examples() {
        let sc = electrons(1e-3, 0.0, AmplitudeModel::log_phase(1.0));
        assert_eq!(effective_dipole(&sc).unwrap(), [0.0, 0.0]);
        let half = electrons(1e-3, 0.5, AmplitudeModel::log_phase(1.0));
        let d = effective_dipole(&half).unwrap();
        assert_relative_eq!(d[0], 0.5 * half.sigma_x(), max_relative = 1e-9);

        let sigma = 1e-3 * ME;
        let mut airy = sc.clone();
        airy.first = PacketSpec {
            shape: crate::packets::ShapeSpec::Airy { xi: 1.0 / sigma },
            ..PacketSpec::gaussian(&[0.0], &[sigma], &[0.0])
        };
        let d = effective_dipole(&airy).unwrap();
        assert!(d[0].abs() > 0.1 / sigma, "{d:?}");
    }

    #[test]
    fn linear_in_sigma() {
        let base = electrons(1e-4, 1.0, AmplitudeModel::log_phase(1.0));
        let r0 = base.prepare().unwrap().first_order_ratio(1.0, 0.3).unwrap() / 1e-4;
        for ratio in [3e-4, 1e-3, 3e-3, 1e-2] {
            let r = base.with_sigma_ratio(ratio).unwrap().prepare().unwrap().first_order_ratio(1.0, 0.3).unwrap();
            assert_relative_eq!(r / ratio, r0, max_relative = 1e-2);
        }
    }

    #[test]
    fn ratio_scales_inversely_with_momentum() {
        let base = electrons(1e-3, 1.0, AmplitudeModel::log_phase(1.0));
        let p0 = base.prepare().unwrap();
        let mut hot = base.clone();
        hot.sqrt_s *= 10.0;
        let p1 = hot.prepare().unwrap();
        let (r0, r1) = (p0.first_order_ratio(1.0, 0.0).unwrap(), p1.first_order_ratio(1.0, 0.0).unwrap());
        assert_relative_eq!(r0 / r1, p1.collision.pz / p0.collision.pz, max_relative = 1e-6);
    }

    /// The ratio carries `sigma_p / p`, so at fixed `sigma_p / m` and angle it
    /// falls with energy; kept as a record of that disagreement.
    #[test]
    #[ignore = "ratio scales as 1/p at fixed angle; see ratio_scales_inversely_with_momentum"]
    fn ratio_persists_with_energy() {
        let base = electrons(1e-3, 1.0, AmplitudeModel::log_phase(1.0));
        let mut hot = base.clone();
        hot.sqrt_s *= 10.0;
        let r0 = base.prepare().unwrap().first_order_ratio(1.0, 0.0).unwrap();
        let r1 = hot.prepare().unwrap().first_order_ratio(1.0, 0.0).unwrap();
        assert!(r0 / r1 < 2.0 && r1 / r0 < 2.0, "{r0} {r1}");
    }

    #[test]
    fn unstable_gradient_is_reported() {
        // Impact parameter of 12 widths puts the collision point deep in the tail.
        let sc = electrons(1e-3, 12.0, AmplitudeModel::log_phase(1.0));
        assert!(matches!(sc.prepare().unwrap().first_order_ratio(1.0, 0.0), Err(Error::WignerGradientUnstable { .. })));
    }

    #[test]
    fn invalid_binning() {
        let mut sc = electrons(1e-3, 1.0, AmplitudeModel::log_phase(1.0));
        sc.phi_bins = 6;
        assert!(sc.prepare().is_err());
        sc.phi_bins = 9;
        assert!(sc.prepare().is_err());
    }

    fn atom_scenario(d_over_sigma_x: f64) -> ScatteringScenario {
        let sigma = 1.0 / nm_to_natural(0.1);
        let mut sc = electrons(sigma / ME, 1.0, AmplitudeModel::log_phase(0.1));
        sc.m2 = 938.272;
        sc.sqrt_s = (ME * ME + 0.63f64.powi(2)).sqrt() + (sc.m2 * sc.m2 + 0.63f64.powi(2)).sqrt();
        let weights = [Complex64::new(1.0, 0.0); 2];
        sc.first = PacketSpec::symmetric_cat(1, sigma, d_over_sigma_x / sigma, weights);
        sc.second = PacketSpec::gaussian(&[0.0], &[20.0 * sigma], &[0.0]);
        sc
    }

    #[test]
    fn atom_scale_enhancement() {
        let a = nm_to_natural(0.053);
        let prep = atom_scenario(2.0).prepare().unwrap();
        let theta = 6e-3;
        let atom = prep.atom_scale_asymmetry(theta, a).unwrap();
        assert_relative_eq!(atom.scale, 0.53, max_relative = 1e-12);
        let point = prep.atom_scale_asymmetry(theta, 1.0 / ME).unwrap();
        assert!(atom.asymmetry.value.abs() > point.asymmetry.value.abs());
        let mut last = 0.0;
        for frac in [0.05, 0.1, 0.2, 0.3, 0.5] {
            let a = frac * prep.scenario.sigma_x();
            let v = prep.atom_scale_asymmetry(theta, a).unwrap().asymmetry.value.abs();
            assert!(v > last, "{frac} {v} {last}");
            last = v;
        }
    }

    #[test]
    fn degenerate_cat_matches_gaussian_bitwise() {
        let cat = atom_scenario(0.0).prepare().unwrap();
        let mut gauss = atom_scenario(0.0);
        gauss.first = PacketSpec::gaussian(&[0.0], &[gauss.first.sigma[0]], &[0.0]);
        let gauss = gauss.prepare().unwrap();
        let a = nm_to_natural(0.053);
        let x = cat.atom_scale_asymmetry(6e-3, a).unwrap();
        let y = gauss.atom_scale_asymmetry(6e-3, a).unwrap();
        assert_eq!(x.asymmetry.value.to_bits(), y.asymmetry.value.to_bits());
    }

    #[test]
    fn report_has_one_row_per_bin() {
        let sc = electrons(1e-3, 1.0, AmplitudeModel::log_phase(1.0));
        let report = CorrectionReport::build(&sc.prepare().unwrap(), None, None).unwrap();
        assert_eq!(report.bins.len(), 16);
        assert_eq!(report.asymmetries.len(), 1);
        assert!(report.bins.iter().all(|b| b.oracle_ratio.is_none()));
        assert_relative_eq!(report.paraxiality[0].ratio_c, 1e-3, max_relative = 1e-12);
        assert!(report.bins.iter().all(|b| b.modulus_term.abs() < 1e-12));
    }

    /// `|int psi M / M(q0)|^2 / |int psi|^2 - 1`, the exact ratio.
    fn factorized_ratio(prep: &Prepared, theta: f64, phi: f64) -> f64 {
        use crate::amplitudes::evaluate;
        use crate::quad::{self, Bundle, Estimate};
        let n = crate::kinematics::direction(theta, phi);
        let (s0, t0) = prep.collision.invariants(prep.mean_q, n);
        let m0 = evaluate(&prep.scenario.amplitude, s0, t0).unwrap();
        let support = prep.relative.support();
        let est: Estimate<Bundle<Complex64, 2>> = quad::integrate(&support[..2], 8, 1e-8, 0.0, &|q: &[f64]| {
            let q = [q[0], q[1]];
            let (s, t) = prep.collision.invariants(q, n);
            let psi = prep.relative.amplitude(q);
            Bundle([psi * evaluate(&prep.scenario.amplitude, s, t).unwrap() / m0, psi])
        })
        .unwrap();
        let [a, b] = est.value.0;
        a.norm_sqr() / b.norm_sqr() - 1.0
    }

    #[test]
    fn vortex_needs_the_modulus_term() {
        let sigma = 1e-3;
        let mut sc = electrons(sigma / ME, 1.0, AmplitudeModel::log_phase(1.0));
        sc.first = PacketSpec {
            dim: 2,
            mean_p: vec![0.0, 0.0],
            sigma: vec![sigma, sigma],
            shift_b: vec![0.0, 0.0],
            shape: crate::packets::ShapeSpec::Vortex { kappa: 2.0 * sigma, ell: 1.0 },
        };
        sc.second = PacketSpec::gaussian(&[0.0, 0.0], &[sigma, sigma], &[0.0, 0.0]);
        sc.impact = vec![1.0 / sigma, 0.0];
        let prep = sc.prepare().unwrap();
        let (theta, phi) = (1.2, 0.3);
        let exact = factorized_ratio(&prep, theta, phi);
        let phase_only = prep.first_order_ratio(theta, phi).unwrap();
        let full = phase_only + prep.modulus_term(theta, phi).unwrap();
        // The phase-only term even has the wrong sign here.
        assert!(phase_only * exact < 0.0, "{phase_only} {exact}");
        assert_relative_eq!(full, exact, max_relative = 0.02);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn rotation_covariance(angle in 0.0f64..std::f64::consts::TAU, b in 0.2f64..1.5) {
            let sigma = 2e-3 * ME;
            let mut sc = electrons(2e-3, 1.0, AmplitudeModel::log_phase(1.0));
            sc.first = PacketSpec::gaussian(&[0.0, 0.0], &[sigma, sigma], &[0.0, 0.0]);
            sc.second = sc.first.clone();
            sc.impact = vec![b / sigma, 0.0];
            let reference = sc.prepare().unwrap().azimuthal_asymmetry(1.0).unwrap().value;
            let (s, c) = angle.sin_cos();
            let mut rotated = sc.clone();
            rotated.impact = vec![c * b / sigma, s * b / sigma];
            rotated.phi_offset = angle;
            let value = rotated.prepare().unwrap().azimuthal_asymmetry(1.0).unwrap().value;
            prop_assert!((value - reference).abs() < 1e-9);
            prop_assert!(value.abs() <= 1.0);
        }

        #[test]
        fn centred_symmetric_states_have_no_asymmetry(sigma_ratio in 1e-4f64..1e-2, eta in -2.0f64..2.0) {
            let sc = electrons(sigma_ratio, 0.0, AmplitudeModel::log_phase(eta));
            let asym = sc.prepare().unwrap().azimuthal_asymmetry(0.7).unwrap();
            prop_assert!(asym.value.abs() < 1e-9);
        }
    }
}
