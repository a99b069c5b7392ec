use thiserror::Error;

/// Errors surfaced by the identification and control pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a precondition (dimension mismatch, non-finite value, ...).
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// A configuration or parameter value is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A least-squares problem was numerically rank deficient.
    #[error("numerical rank deficiency: {0}")]
    NumericalRank(String),

    /// A multi-step prediction produced non-finite values.
    #[error("prediction diverged at step {step}")]
    Divergence { step: usize },

    /// The simulated plant reached an unrecoverable state.
    #[error("plant crashed at t = {time:.4} s: {reason}")]
    Crash { time: f64, reason: String },

    /// A pipeline stage failed; the stage name is included for diagnostics.
    #[error("pipeline stage '{stage}' failed: {message}")]
    Pipeline { stage: String, message: String },

    /// Data file could not be loaded or validated.
    #[error("load error: {0}")]
    Load(String),

    /// Model or config (de)serialization failed.
    #[error("serialization error: {0}")]
    Serialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
