//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, solvers and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// A model specification violated its invariants.
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    /// A parameter point violated the constraints of its spec.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A dataset failed validation.
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    /// A likelihood evaluation overflowed or produced a non-finite value.
    #[error("non-finite likelihood term at observation {observation}")]
    NonFiniteLikelihood { observation: usize },

    /// A solver iterate became non-finite.
    #[error("non-finite state at iteration {iteration}: {detail}")]
    NonFiniteIterate { iteration: usize, detail: String },

    /// A finite-difference probe evaluated to a non-finite value.
    #[error("non-finite evaluation at probe point {point:?}")]
    NonFiniteEval { point: Vec<f64> },

    /// An iterated map produced an invalid state.
    #[error("map produced an invalid state at step {step}: {detail}")]
    InvalidState { step: usize, detail: String },

    /// Rate estimation did not have enough usable ratios.
    #[error("insufficient data for rate estimate: {valid} valid ratios, need at least 3")]
    InsufficientRateData { valid: usize },

    /// A sampled point beat the supposed local maximum; the ball is too large.
    #[error("not a local max in ball: sampled point improves the objective by {excess:e}")]
    NotLocalMaxInBall { excess: f64 },

    /// File or serialization problem.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
