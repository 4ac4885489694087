//! Relativistic 2 -> 2 kinematics in natural units (hbar = c = 1, MeV).
//!
//! The metric signature is (+, -, -, -). The collision axis is z; incoming
//! packets carry transverse momentum only through [`Collision`].

use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// hbar * c in MeV * nm.
pub const HBAR_C_MEV_NM: f64 = 197.327e-6;

/// Convert a length in nm to natural units (MeV^-1).
pub fn nm_to_natural(length_nm: f64) -> f64 {
    length_nm / HBAR_C_MEV_NM
}

pub fn natural_to_nm(length: f64) -> f64 {
    length * HBAR_C_MEV_NM
}

pub fn kev_to_mev(e: f64) -> f64 {
    e * 1e-3
}

pub fn mev_to_kev(e: f64) -> f64 {
    e * 1e3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourMomentum {
    pub e: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
}

impl FourMomentum {
    pub const fn new(e: f64, px: f64, py: f64, pz: f64) -> Self {
        Self { e, px, py, pz }
    }

    /// On-shell momentum with the given mass and 3-momentum.
    pub fn on_shell(mass: f64, p: [f64; 3]) -> Self {
        let e = (mass * mass + p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        Self::new(e, p[0], p[1], p[2])
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.e * other.e - self.px * other.px - self.py * other.py - self.pz * other.pz
    }

    pub fn mass_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn three_norm(&self) -> f64 {
        (self.px * self.px + self.py * self.py + self.pz * self.pz).sqrt()
    }

    /// Boost along z with the given rapidity.
    pub fn boost_z(&self, rapidity: f64) -> Self {
        let (sh, ch) = (rapidity.sinh(), rapidity.cosh());
        Self::new(ch * self.e + sh * self.pz, self.px, self.py, sh * self.e + ch * self.pz)
    }
}

impl Add for FourMomentum {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.e + o.e, self.px + o.px, self.py + o.py, self.pz + o.pz)
    }
}

impl Sub for FourMomentum {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.e - o.e, self.px - o.px, self.py - o.py, self.pz - o.pz)
    }
}

impl Neg for FourMomentum {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.e, -self.px, -self.py, -self.pz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MandelstamPoint {
    pub s: f64,
    pub t: f64,
    pub u: f64,
}

/// Mandelstam invariants of `p1 + p2 -> p3 + p4`.
pub fn mandelstam(p1: FourMomentum, p2: FourMomentum, p3: FourMomentum, p4: FourMomentum) -> Result<MandelstamPoint> {
    let total = p1 + p2;
    let s = total.mass_sq();
    let diff = total - p3 - p4;
    let residual = diff.e.abs().max(diff.px.abs()).max(diff.py.abs()).max(diff.pz.abs());
    let scale = s.abs().sqrt().max(total.e.abs()).max(f64::MIN_POSITIVE);
    if residual > 1e-9 * scale {
        return Err(Error::NonConservedMomentum { residual });
    }
    Ok(MandelstamPoint { s, t: (p1 - p3).mass_sq(), u: (p1 - p4).mass_sq() })
}

/// Centre-of-mass momentum magnitude for invariant mass squared `s`.
pub fn cm_momentum(s: f64, m1: f64, m2: f64) -> Result<f64> {
    let threshold = (m1 + m2) * (m1 + m2);
    if s < threshold {
        return Err(Error::BelowThreshold { s, threshold });
    }
    let pseudo = (m1 - m2) * (m1 - m2);
    Ok(((s - threshold) * (s - pseudo)).sqrt() / (2.0 * s.sqrt()))
}

/// Dimensionless smallness parameters of a packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParaxialityReport {
    /// 2 pi / |<p>|; `None` at zero mean momentum.
    pub lambda_db: Option<f64>,
    pub lambda_c: f64,
    /// sigma_p / |<p>|; `None` at zero mean momentum.
    pub ratio_db: Option<f64>,
    pub ratio_c: f64,
    pub atom_ratio: Option<f64>,
}

/// Widths follow `sigma_p = 1 / sigma_x`, so `ratio_c = lambda_c / sigma_x`
/// and `atom_ratio = a / sigma_x`.
pub fn paraxiality(mass: f64, sigma_p: f64, mean_p: f64, atom_size: Option<f64>) -> Result<ParaxialityReport> {
    if !(mass > 0.0) {
        return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
    }
    if !(sigma_p > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_p must be positive, got {sigma_p}")));
    }
    if !(mean_p >= 0.0) {
        return Err(Error::InvalidParameter(format!("mean_p must be nonnegative, got {mean_p}")));
    }
    if let Some(a) = atom_size {
        if !(a > 0.0) {
            return Err(Error::InvalidParameter(format!("atom size must be positive, got {a}")));
        }
    }
    let moving = mean_p > 0.0;
    Ok(ParaxialityReport {
        lambda_db: moving.then(|| 2.0 * std::f64::consts::PI / mean_p),
        lambda_c: 1.0 / mass,
        ratio_db: moving.then(|| sigma_p / mean_p),
        ratio_c: sigma_p / mass,
        atom_ratio: atom_size.map(|a| a * sigma_p),
    })
}

/// Unit vector of the outgoing particle 3 for polar angle `theta` and azimuth `phi`.
pub fn direction(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Head-on elastic collision along z in the centre-of-mass frame.
///
/// Particle 1 carries transverse momentum `q` and particle 2 carries `-q`,
/// both with longitudinal momentum `+-pz`; particle 3 (mass `m1`) leaves
/// along a fixed direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub m1: f64,
    pub m2: f64,
    pub pz: f64,
}

impl Collision {
    pub fn from_sqrt_s(sqrt_s: f64, m1: f64, m2: f64) -> Result<Self> {
        let pz = cm_momentum(sqrt_s * sqrt_s, m1, m2)?;
        Ok(Self { m1, m2, pz })
    }

    pub fn incoming(&self, q: [f64; 2]) -> (FourMomentum, FourMomentum) {
        (
            FourMomentum::on_shell(self.m1, [q[0], q[1], self.pz]),
            FourMomentum::on_shell(self.m2, [-q[0], -q[1], -self.pz]),
        )
    }

    /// All four momenta for outgoing direction `n`.
    pub fn momenta(&self, q: [f64; 2], n: [f64; 3]) -> [FourMomentum; 4] {
        let (p1, p2) = self.incoming(q);
        let p = (q[0] * q[0] + q[1] * q[1] + self.pz * self.pz).sqrt();
        let p3 = FourMomentum::on_shell(self.m1, [p * n[0], p * n[1], p * n[2]]);
        let p4 = p1 + p2 - p3;
        [p1, p2, p3, p4]
    }

    /// `(s, t)` for transverse momentum `q`, evaluated in a form that stays
    /// accurate at small scattering angles.
    pub fn invariants(&self, q: [f64; 2], n: [f64; 3]) -> (f64, f64) {
        let q2 = q[0] * q[0] + q[1] * q[1];
        let p_sq = q2 + self.pz * self.pz;
        let e1 = (self.m1 * self.m1 + p_sq).sqrt();
        let e2 = (self.m2 * self.m2 + p_sq).sqrt();
        let s = (e1 + e2) * (e1 + e2);
        let p = p_sq.sqrt();
        // E3 = E1 for elastic CM scattering, so t = -|p1 - p3|^2.
        let dx = q[0] - p * n[0];
        let dy = q[1] - p * n[1];
        let nz_defect = (n[0] * n[0] + n[1] * n[1]) / (1.0 + n[2].abs());
        let dz = if n[2] >= 0.0 {
            // pz - p cos(theta) = (pz - p) + p (1 - cos(theta))
            -q2 / (p + self.pz) + p * nz_defect
        } else {
            self.pz - p * n[2]
        };
        (s, -(dx * dx + dy * dy + dz * dz))
    }

    /// Gradients of `(s, t)` with respect to the transverse momentum `q`.
    pub fn invariant_gradients(&self, q: [f64; 2], n: [f64; 3]) -> ([f64; 2], [f64; 2]) {
        let q2 = q[0] * q[0] + q[1] * q[1];
        let p_sq = q2 + self.pz * self.pz;
        let e1 = (self.m1 * self.m1 + p_sq).sqrt();
        let e2 = (self.m2 * self.m2 + p_sq).sqrt();
        let p = p_sq.sqrt();
        let longitudinal = q[0] * n[0] + q[1] * n[1] + self.pz * n[2];
        let mut ds = [0.0; 2];
        let mut dt = [0.0; 2];
        for a in 0..2 {
            ds[a] = 2.0 * (e1 + e2) * (q[a] / e1 + q[a] / e2);
            let dp = if p > 0.0 { q[a] / p } else { 0.0 };
            dt[a] = -4.0 * q[a] + 2.0 * dp * longitudinal + 2.0 * p * n[a];
        }
        (ds, dt)
    }
}
