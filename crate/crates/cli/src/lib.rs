//! Experiment harness around the phase-shifted training core: a flat
//! key-value configuration format, dataset construction, a versioned model
//! container, CSV metrics, end-to-end experiment orchestration, and
//! plot-ready report generation.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod model_io;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] phaseat_core::Error),
}

impl HarnessError {
    /// Process exit code: 2 for configuration/format problems, 3 for a
    /// numeric blow-up during training, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Format(_) => 2,
            HarnessError::Core(phaseat_core::Error::NumericBlowup { .. }) => 3,
            HarnessError::Core(phaseat_core::Error::Config(_))
            | HarnessError::Core(phaseat_core::Error::Format(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
