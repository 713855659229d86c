//! Crate-wide error type.
//!
//! Every fallible operation returns [`Error`]. Variants are grouped into
//! [`ErrorCategory`] so callers (notably the CLI) can map failures onto
//! distinct exit codes without matching on every variant.

use thiserror::Error;

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Invalid options, bandwidths, intervals, or config-file contents.
    Config,
    /// Malformed or out-of-contract input data.
    Data,
    /// A numerical guard tripped or an iteration failed to converge.
    Numerical,
    /// Filesystem or serialization trouble.
    Io,
}

impl ErrorCategory {
    /// Stable lowercase tag, used in CLI error output next to the exit
    /// code.
    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Io => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("evaluation point {x} outside the declared interval [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("grid mismatch: operands live on different grids")]
    GridMismatch,

    #[error("non-finite value produced while {context}")]
    NonFinite { context: &'static str },

    #[error("boundary-correction denominator vanished at x = {x} (bandwidth too large for the interval)")]
    SingularCorrection { x: f64 },

    #[error("degenerate smoothing window at x = {x}: second-moment sum is zero (no usable data nearby)")]
    DegenerateWindow { x: f64 },

    #[error("singular local-linear window at x = {x}: design matrix not invertible")]
    SingularWindow { x: f64 },

    #[error("nonpositive density estimate at x = {x} with clipping disabled")]
    SingularDensity { x: f64 },

    #[error("cannot center: weight function integrates to (numerically) zero")]
    ZeroMass,

    #[error("bandwidth rule undefined for component {component}: curvature integral is zero")]
    BandwidthUndefined { component: usize },

    #[error("direct solve failed: the assembled linear system is singular")]
    SingularSystem,

    #[error("scenario aborted: {failed} of {reps} replications failed (budget is 2%)")]
    TooManyFailures { failed: usize, reps: usize },

    #[error("backfitting did not converge after {sweeps} sweeps (last residual {last:.3e})")]
    NonConvergence {
        sweeps: usize,
        last: f64,
        trace: Vec<f64>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::BandwidthUndefined { .. } => ErrorCategory::Config,
            Error::Data(_) | Error::Domain { .. } => ErrorCategory::Data,
            Error::GridMismatch
            | Error::NonFinite { .. }
            | Error::SingularCorrection { .. }
            | Error::DegenerateWindow { .. }
            | Error::SingularWindow { .. }
            | Error::SingularDensity { .. }
            | Error::ZeroMass
            | Error::SingularSystem
            | Error::TooManyFailures { .. }
            | Error::NonConvergence { .. } => ErrorCategory::Numerical,
            Error::Io(_) => ErrorCategory::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
