use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the harness: file formats, configuration and command
/// plumbing, plus anything propagated from the engine.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Core(#[from] camoe_core::CoreError),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path} at byte {offset}: {detail}")]
    Format {
        path: PathBuf,
        offset: u64,
        detail: String,
    },

    #[error("digest mismatch in {path}: stored {stored}, computed {computed}")]
    DigestMismatch {
        path: PathBuf,
        stored: String,
        computed: String,
    },

    #[error("model was saved in mode {saved} but {requested} was requested")]
    ModeMismatch { saved: String, requested: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable discriminator for the error record.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Core(_) => "engine",
            HarnessError::Io { .. } => "io",
            HarnessError::Format { .. } => "format",
            HarnessError::DigestMismatch { .. } => "digest",
            HarnessError::ModeMismatch { .. } => "mode-mismatch",
            HarnessError::InvalidArgument(_) => "invalid-argument",
            HarnessError::CheckFailed(_) => "check-failed",
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
