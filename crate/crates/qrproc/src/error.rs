//! Error type shared across the crate.

use ndarray::Array1;

/// Everything that can go wrong while loading data, solving a quantile
/// regression, or running inference.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A quantile index outside the open unit interval.
    #[error("quantile index tau = {tau} is outside the open interval (0, 1)")]
    TauOutOfRange { tau: f64 },

    /// A quantile grid that is empty, non-increasing, or leaves (0, 1).
    #[error("invalid quantile grid: {reason}")]
    InvalidGrid { reason: String },

    /// Mismatched dimensions between inputs.
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// The design matrix does not have full column rank.
    #[error(
        "design matrix is rank deficient: column {column} is numerically \
         dependent on earlier columns (singular value ratio {ratio:.3e})"
    )]
    RankDeficient { column: usize, ratio: f64 },

    /// A malformed input file.
    #[error("failed to parse {path}: {reason}")]
    ParseError { path: String, reason: String },

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// The interior point solver ran out of iterations.
    #[error(
        "interior point solver did not converge at tau = {tau} after {iterations} \
         iterations (relative duality gap {gap:.3e})"
    )]
    Convergence {
        tau: f64,
        iterations: usize,
        gap: f64,
        /// Best coefficient iterate at the time of failure.
        last_beta: Array1<f64>,
    },

    /// A linear system that should have been positive definite was not.
    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: &'static str },

    /// The kernel Jacobian estimate is numerically singular.
    #[error(
        "jacobian estimate at tau = {tau} is numerically singular \
         (min eigenvalue {min_eigenvalue:.3e} vs threshold {threshold:.3e}); \
         the quantile may be too extreme for the sample, or covariates may be \
         degenerate near this quantile"
    )]
    SingularJacobian {
        tau: f64,
        min_eigenvalue: f64,
        threshold: f64,
    },

    /// Too many bootstrap replicates failed to converge.
    #[error(
        "bootstrap failed: {failed} of {total} replicates did not converge \
         (more than {max_rate:.0}% allowed)"
    )]
    BootstrapFailure {
        failed: usize,
        total: usize,
        max_rate: f64,
    },

    /// An argument that violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A quantile index outside the span of a fitted process.
    #[error("tau = {tau} is outside the fitted grid [{lo}, {hi}]")]
    OutsideGrid { tau: f64, lo: f64, hi: f64 },
}

impl Error {
    /// Process exit code class for command-line use: `2` for input or
    /// configuration problems, `3` for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::TauOutOfRange { .. }
            | Error::InvalidGrid { .. }
            | Error::DimensionMismatch { .. }
            | Error::RankDeficient { .. }
            | Error::ParseError { .. }
            | Error::Io { .. }
            | Error::InvalidArgument(_)
            | Error::OutsideGrid { .. } => 2,
            Error::Convergence { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::SingularJacobian { .. }
            | Error::BootstrapFailure { .. } => 3,
        }
    }
}
