//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Dimensions of an input do not match what an operation expects.
    #[error("shape error: {0}")]
    Shape(String),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An index (e.g. a class label) is out of range.
    #[error("index error: {0}")]
    Index(String),

    /// An operation was called with stale or inconsistent state, such as a
    /// backward pass over a trace recorded from different parameters.
    #[error("state error: {0}")]
    State(String),

    /// The data admits no meaningful answer (e.g. zero-variance dataset
    /// handed to the principal-component routine).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// A configuration value violates a module invariant.
    #[error("invalid config: {0}")]
    Config(String),

    /// A file does not conform to its expected layout.
    #[error("format error: {0}")]
    Format(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NumericBlowup { epoch: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
