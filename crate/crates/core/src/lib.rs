//! Non-plane-wave effects in 2 -> 2 scattering of structured wave packets.
//!
//! The crate evaluates packet-averaged squared amplitudes by brute-force
//! quadrature or Monte Carlo ([`oracle`]), the first-order phase-derivative
//! correction and azimuthal asymmetries ([`correction`]), Wigner functions and
//! their negativity ([`wigner`]), and paraxiality parameters ([`kinematics`]).
//!
//! Natural units (hbar = c = 1) with energies in MeV are used throughout.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amplitudes;
pub mod correction;
pub mod error;
pub mod kinematics;
pub mod oracle;
pub mod packets;
pub mod quad;
pub mod wigner;

pub use error::{Error, Result};
