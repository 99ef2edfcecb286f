//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector or batch had the wrong length for the model it was used with.
    #[error("{what}: expected length {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{0} must not be empty")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A dataset file violated the IDX format.
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("requested {requested} samples but only {available} are available")]
    InsufficientData { requested: usize, available: usize },

    #[error("episode sequence invalid: {0}")]
    Sequencing(String),

    /// A non-finite value surfaced in a numeric computation.
    #[error("non-finite value in {context}")]
    Numeric { context: String },
}

/// Coarse failure categories, used by the CLI to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad invocation or configuration (exit 2).
    Usage,
    /// Dataset could not be loaded or is malformed (exit 3).
    Dataset,
    /// Numeric failure such as a NaN loss (exit 4).
    Numeric,
    /// Anything else (exit 1).
    Other,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Usage => 2,
            ErrorCategory::Dataset => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Other => 1,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Usage,
            Error::Format { .. }
            | Error::Io { .. }
            | Error::InsufficientData { .. }
            | Error::Sequencing(_) => ErrorCategory::Dataset,
            Error::Numeric { .. } => ErrorCategory::Numeric,
            Error::ShapeMismatch { .. } | Error::EmptyInput(_) => ErrorCategory::Other,
        }
    }
}
