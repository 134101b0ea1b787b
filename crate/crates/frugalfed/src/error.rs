//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

/// Unified error for simulator operations.
///
/// `Config` and `Parse` indicate problems with user-supplied input and map to
/// exit code 2 in the CLI; everything else is a runtime failure (exit code 3).
#[derive(Debug, Error)]
pub enum SimError {
    /// Tensor dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value: {0}")]
    Numeric(String),

    /// An operation was called with arguments outside its domain.
    #[error("invalid usage: {0}")]
    Usage(String),

    /// A configuration field failed validation.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// Input text could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// A partition request cannot be satisfied.
    #[error("partition error: {0}")]
    Partition(String),

    /// A federated-protocol rule was violated (e.g. personal parameters in a
    /// server-bound payload).
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// The requested metric is undefined on this input (e.g. ROC AUC with a
    /// single class present).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn shape(msg: impl Into<String>) -> Self {
        SimError::Shape(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        SimError::Numeric(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        SimError::Usage(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        SimError::Parse(msg.into())
    }

    pub fn partition(msg: impl Into<String>) -> Self {
        SimError::Partition(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        SimError::Protocol(msg.into())
    }

    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config { .. } | SimError::Parse(_) => 2,
            _ => 3,
        }
    }
}
