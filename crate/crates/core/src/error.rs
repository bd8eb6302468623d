use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    Dimension(String),

    #[error("subsystem index {index} out of range for a {factors}-factor space")]
    SubsystemIndex { index: usize, factors: usize },

    #[error("operators live on different Hilbert spaces")]
    SpaceMismatch,

    #[error("unknown atomic level `{0}`")]
    UnknownLevel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density-matrix invariant violated: {0}")]
    InvalidState(String),

    #[error("step {step:e} s is too large: must not exceed {limit:e} s")]
    StepTooLarge { step: f64, limit: f64 },

    #[error("integration produced an invalid state: {0}")]
    Integration(String),

    #[error("invariant subspace construction failed: {0}")]
    Subspace(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed fringe file: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
