use thiserror::Error;

/// Errors produced by the samplers, the asymptotic formulas and the harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("matrix is not positive definite (smallest eigenvalue {lambda_min:e})")]
    NotPositiveDefinite { lambda_min: f64 },

    #[error("matrix is not symmetric (relative asymmetry {relative_asymmetry:e})")]
    NotSymmetric { relative_asymmetry: f64 },

    #[error("the loading vector l must be nonzero")]
    ZeroVector,

    #[error("regime violation: {0}")]
    Regime(String),

    #[error("the density is only available for truncated-normal mixing")]
    UnsupportedMixing,

    #[error("requested accuracy {requested:e} not reached (achieved standard error {achieved:e})")]
    AccuracyNotMet { requested: f64, achieved: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(what: &str, expected: usize, got: usize) -> Error {
    Error::InvalidDimension(format!("{what}: expected {expected}, got {got}"))
}
