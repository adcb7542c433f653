//! Error type shared by every module in the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller handed us something structurally unusable (empty dataset,
    /// zero-sized layer, out-of-range class index, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tensor/shape disagreement between two values that must line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Training produced a non-finite loss; carries the step/epoch at which
    /// the blow-up was detected.
    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: u64, reason: String },

    /// Config file problem. `line` is 1-based; 0 means the file as a whole.
    #[error("config error at {path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    /// A serialized artifact is corrupt or not in the expected container
    /// format.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    /// A pipeline stage was invoked before the stage that produces its
    /// input artifact.
    #[error("stage '{stage}' needs {missing}: run '{hint}' first")]
    StageOrder {
        stage: String,
        missing: PathBuf,
        hint: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::StageOrder { .. } => 3,
            Error::Divergence { .. } => 4,
            _ => 1,
        }
    }
}
