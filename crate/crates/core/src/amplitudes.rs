//! Scattering-amplitude models `M(s, t) = |M| exp(i zeta)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub s_pow: u32,
    pub t_pow: u32,
    pub coeff: f64,
}

/// Amplitude families. Moduli are power laws `norm / (mu^2 - t)^power`
/// (`mu = 0` except for the screened log phase).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AmplitudeModel {
    ConstantPhase {
        #[serde(default = "one")]
        norm: f64,
        #[serde(default)]
        power: f64,
        #[serde(default)]
        zeta0: f64,
    },
    /// Coulomb-like phase `eta ln((mu^2 - t) / lambda_sq)`; with the default
    /// `screening_sq = 0` this is `eta ln(-t / lambda_sq)`.
    LogPhase {
        #[serde(default = "one")]
        norm: f64,
        #[serde(default = "one")]
        power: f64,
        eta: f64,
        #[serde(default = "one")]
        lambda_sq: f64,
        #[serde(default)]
        screening_sq: f64,
    },
    /// `zeta = sum c_mn s^m t^n`.
    PolynomialPhase {
        #[serde(default = "one")]
        norm: f64,
        #[serde(default)]
        power: f64,
        terms: Vec<PolyTerm>,
    },
    /// Modulus and phase tabulated against t, interpolated by natural cubic
    /// splines; independent of s.
    Tabulated { t: Vec<f64>, modulus: Vec<f64>, phase: Vec<f64> },
}

impl AmplitudeModel {
    pub fn log_phase(eta: f64) -> Self {
        AmplitudeModel::LogPhase { norm: 1.0, power: 1.0, eta, lambda_sq: 1.0, screening_sq: 0.0 }
    }

    pub fn constant_phase(zeta0: f64) -> Self {
        AmplitudeModel::ConstantPhase { norm: 1.0, power: 0.0, zeta0 }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AmplitudeModel::ConstantPhase { .. } => "constant_phase",
            AmplitudeModel::LogPhase { .. } => "log_phase",
            AmplitudeModel::PolynomialPhase { .. } => "polynomial_phase",
            AmplitudeModel::Tabulated { .. } => "tabulated",
        }
    }

    /// Parameter consistency checks, independent of any (s, t).
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            AmplitudeModel::ConstantPhase { norm, power, zeta0 } => {
                if !(*norm > 0.0) || !power.is_finite() || !zeta0.is_finite() {
                    return bad("constant_phase needs norm > 0 and finite power, zeta0");
                }
            }
            AmplitudeModel::LogPhase { norm, power, eta, lambda_sq, screening_sq } => {
                if !(*norm > 0.0) || !power.is_finite() || !eta.is_finite() {
                    return bad("log_phase needs norm > 0 and finite power, eta");
                }
                if !(*lambda_sq > 0.0) || !(*screening_sq >= 0.0) {
                    return bad("log_phase needs lambda_sq > 0 and screening_sq >= 0");
                }
            }
            AmplitudeModel::PolynomialPhase { norm, power, terms } => {
                if !(*norm > 0.0) || !power.is_finite() || terms.iter().any(|c| !c.coeff.is_finite()) {
                    return bad("polynomial_phase needs norm > 0 and finite coefficients");
                }
            }
            AmplitudeModel::Tabulated { t, modulus, phase } => {
                if t.len() < 3 || modulus.len() != t.len() || phase.len() != t.len() {
                    return bad("tabulated needs >= 3 rows of equal length");
                }
                if t.windows(2).any(|w| !(w[0] < w[1])) || !(t[t.len() - 1] < 0.0) {
                    return bad("tabulated t must be strictly increasing and negative");
                }
                if modulus.iter().any(|m| !(*m > 0.0)) || phase.iter().any(|z| !z.is_finite()) {
                    return bad("tabulated modulus must be positive and phase finite");
                }
            }
        }
        Ok(())
    }

    fn check_domain(&self, s: f64, t: f64) -> Result<()> {
        let inside = match self {
            AmplitudeModel::Tabulated { t: ts, .. } => t >= ts[0] && t <= ts[ts.len() - 1],
            _ => t < 0.0,
        };
        if !inside || !(s > 0.0) || !s.is_finite() {
            return Err(Error::OutOfDomain { s, t });
        }
        Ok(())
    }

    /// `|M(s, t)|`.
    pub fn modulus(&self, s: f64, t: f64) -> Result<f64> {
        self.check_domain(s, t)?;
        Ok(match self {
            AmplitudeModel::ConstantPhase { norm, power, .. } | AmplitudeModel::PolynomialPhase { norm, power, .. } => {
                norm * (-t).powf(-power)
            }
            AmplitudeModel::LogPhase { norm, power, screening_sq, .. } => norm * (screening_sq - t).powf(-power),
            AmplitudeModel::Tabulated { t: ts, modulus, .. } => Spline::new(ts, modulus).value(t),
        })
    }

    /// `zeta(s, t)`.
    pub fn phase(&self, s: f64, t: f64) -> Result<f64> {
        self.check_domain(s, t)?;
        Ok(match self {
            AmplitudeModel::ConstantPhase { zeta0, .. } => *zeta0,
            AmplitudeModel::LogPhase { eta, lambda_sq, screening_sq, .. } => {
                eta * ((screening_sq - t) / lambda_sq).ln()
            }
            AmplitudeModel::PolynomialPhase { terms, .. } => {
                terms.iter().map(|c| c.coeff * s.powi(c.s_pow as i32) * t.powi(c.t_pow as i32)).sum()
            }
            AmplitudeModel::Tabulated { t: ts, phase, .. } => Spline::new(ts, phase).value(t),
        })
    }
}

/// `|M| exp(i zeta)` at `(s, t)`.
pub fn evaluate(model: &AmplitudeModel, s: f64, t: f64) -> Result<Complex64> {
    Ok(Complex64::from_polar(model.modulus(s, t)?, model.phase(s, t)?))
}

/// Analytic `(d zeta / ds, d zeta / dt)`.
pub fn phase_gradient(model: &AmplitudeModel, s: f64, t: f64) -> Result<(f64, f64)> {
    model.check_domain(s, t)?;
    Ok(match model {
        AmplitudeModel::ConstantPhase { .. } => (0.0, 0.0),
        AmplitudeModel::LogPhase { eta, screening_sq, .. } => (0.0, eta / (t - screening_sq)),
        AmplitudeModel::PolynomialPhase { terms, .. } => terms.iter().fold((0.0, 0.0), |(ds, dt), c| {
            let (m, n) = (c.s_pow as i32, c.t_pow as i32);
            let dzs = if m > 0 { c.coeff * m as f64 * s.powi(m - 1) * t.powi(n) } else { 0.0 };
            let dzt = if n > 0 { c.coeff * n as f64 * s.powi(m) * t.powi(n - 1) } else { 0.0 };
            (ds + dzs, dt + dzt)
        }),
        AmplitudeModel::Tabulated { t: ts, phase, .. } => (0.0, Spline::new(ts, phase).derivative(t)),
    })
}

/// Central-difference phase gradient with step `h`; error is O(h^2).
pub fn phase_gradient_fd(model: &AmplitudeModel, s: f64, t: f64, h: f64) -> Result<(f64, f64)> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let ds = (model.phase(s + h, t)? - model.phase(s - h, t)?) / (2.0 * h);
    let dt = (model.phase(s, t + h)? - model.phase(s, t - h)?) / (2.0 * h);
    Ok((ds, dt))
}

/// Plane-wave `d sigma / dt = |M|^2 / (16 pi [s - (m1+m2)^2][s - (m1-m2)^2])`.
pub fn plane_wave_dsigma_dt(model: &AmplitudeModel, s: f64, t: f64, m1: f64, m2: f64) -> Result<f64> {
    let threshold = (m1 + m2) * (m1 + m2);
    if !(s > threshold) {
        return Err(Error::BelowThreshold { s, threshold });
    }
    let modulus = model.modulus(s, t)?;
    let flux = (s - threshold) * (s - (m1 - m2) * (m1 - m2));
    Ok(modulus * modulus / (16.0 * PI * flux))
}

/// Natural cubic spline through `(x_i, y_i)`.
struct Spline<'a> {
    x: &'a [f64],
    y: &'a [f64],
    second: Vec<f64>,
}

impl<'a> Spline<'a> {
    fn new(x: &'a [f64], y: &'a [f64]) -> Self {
        let n = x.len();
        let mut second = vec![0.0; n];
        let mut u = vec![0.0; n];
        // Tridiagonal sweep for the natural boundary conditions.
        for i in 1..n - 1 {
            let sig = (x[i] - x[i - 1]) / (x[i + 1] - x[i - 1]);
            let p = sig * second[i - 1] + 2.0;
            second[i] = (sig - 1.0) / p;
            let slope = (y[i + 1] - y[i]) / (x[i + 1] - x[i]) - (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
            u[i] = (6.0 * slope / (x[i + 1] - x[i - 1]) - sig * u[i - 1]) / p;
        }
        second[n - 1] = 0.0;
        for i in (0..n - 1).rev() {
            second[i] = second[i] * second[i + 1] + u[i];
        }
        Self { x, y, second }
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.x.len();
        self.x[1..n - 1].partition_point(|&xi| xi <= t)
    }

    fn value(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h / 6.0
    }

    fn derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * self.second[i]
            + (3.0 * b * b - 1.0) / 6.0 * h * self.second[i + 1]
    }
}
