use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("momentum not conserved: |p1+p2-p3-p4| = {residual:e} exceeds tolerance")]
    NonConservedMomentum { residual: f64 },

    #[error("s = {s} is below threshold {threshold}")]
    BelowThreshold { s: f64, threshold: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("normalization failed: {0}")]
    NormalizationFailure(String),

    /// `achieved` is the relative change of the last refinement (NaN when
    /// the budget allowed only one level).
    #[error("quadrature did not reach tolerance {tolerance:e} within {nodes} nodes (last change {achieved:e})")]
    QuadratureNonConvergence { nodes: usize, tolerance: f64, achieved: f64 },

    #[error("phase-space grid too coarse: normalization off by {deviation:e}")]
    GridTooCoarse { deviation: f64 },

    #[error("aliasing detected: boundary value ratio {ratio:e}")]
    AliasingDetected { ratio: f64 },

    #[error("(s, t) = ({s}, {t}) outside the amplitude's physical domain")]
    OutOfDomain { s: f64, t: f64 },

    #[error("Wigner density at the collision point is {ratio:e} of its peak; gradient is unstable")]
    WignerGradientUnstable { ratio: f64 },

    #[error("dipole moment vanishes and the in-state is symmetric")]
    DegenerateDipole,

    #[error("oracle did not reach relative error {target:e} (best {achieved:e})")]
    NonConvergence { target: f64, achieved: f64 },

    #[error("oracle value {value:e} is negative beyond its error {error:e}")]
    NegativeValueBeyondError { value: f64, error: f64 },
}
