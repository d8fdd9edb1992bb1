use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument {value} outside admissible interval ({lo}, {hi}) for {what}")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("function is not {expected} on [{lo}, {hi}]")]
    NotMonotone {
        expected: &'static str,
        lo: f64,
        hi: f64,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("Nash profile not ultracontractive: upper tail integral of 1/theta diverges")]
    NotUltracontractive,

    #[error("doubling failure: {0}")]
    DoublingFailure(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("premise not certified: {0}")]
    PremiseNotCertified(String),

    #[error("form has no coordinates")]
    MissingCoords,

    #[error("scaling not admissible: {0}")]
    ScalingNotAdmissible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
