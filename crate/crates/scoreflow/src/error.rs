//! Error type shared by every module.

/// Failures surfaced by construction, evaluation, and the experiment harness.
///
/// Variants split into two operational classes: configuration/input problems
/// (rejected before any numerics run) and numerical failures (collapse,
/// underflow, divergence). The CLI maps the former to exit code 1 and the
/// latter to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric: max asymmetry {max_asym:.3e}")]
    NotSymmetric { max_asym: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    NotPsd { min_eig: f64 },

    #[error("matrix is not positive definite: min eigenvalue {min_eig:.3e}")]
    NotPd { min_eig: f64 },

    #[error("collapsed measure: covariance is singular within tolerance")]
    CollapsedMeasure,

    /// Continuous-flow time at or past the singular time of the covariance.
    #[error("covariance collapse at t = {collapse_at}: requested t = {t}")]
    CovarianceCollapse { t: f64, collapse_at: f64 },

    #[error("out of support: all kernel weights underflow at the query point")]
    OutOfSupport,

    #[error("evaluated far outside support: all component log densities underflow")]
    DensityUnderflow,

    #[error("non-finite particle at index {index}")]
    NonFiniteParticle { index: usize },

    #[error("ridgelet grid aliasing: max |a| * dx = {product:.3} exceeds {limit}")]
    AliasingLimit { product: f64, limit: f64 },

    /// Dual transform refused: the coefficient array has not decayed at the
    /// edge of the (a, b) grid, so the synthesis integral is truncated.
    #[error("ridgelet boundary mass: edge coefficient is {ratio:.3e} of the peak (limit 1e-2)")]
    BoundaryMass { ratio: f64 },

    #[error("inadmissible pair: admissibility constant {k:.3e} is not finite and nonzero")]
    InadmissiblePair { k: f64 },

    #[error("layer-1 grid does not cover the layer-0 output range [{lo:.4}, {hi:.4}]")]
    RangeNotCovered { lo: f64, hi: f64 },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("grid too coarse: trapezoidal mass {mass:.6} deviates from 1 by more than 2%")]
    GridTooCoarse { mass: f64 },

    #[error("verification failed: {failed} of {total} checks")]
    ChecksFailed { failed: usize, total: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code class: 1 for configuration/input errors, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) | Error::InvalidParameter(_) => 1,
            _ => 2,
        }
    }

    /// Stable one-word class used in the CLI's machine-parsable error line.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => "config",
            Error::Io(_) => "io",
            _ => "numeric",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
