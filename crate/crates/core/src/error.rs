use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument value is out of its allowed range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Input data violates a precondition (negative depth, mismatched lengths).
    #[error("invalid data: {0}")]
    Data(String),
    /// A caller broke an API contract (shape mismatch between paired inputs).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Bytes on disk do not follow the expected layout.
    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Grad(#[from] ndgrad::GradError),
    #[error("training diverged at step {step}: loss is {loss}")]
    NonFinite { step: usize, loss: f64 },
    #[error("checkpoint was written for a different model configuration ({0})")]
    ConfigMismatch(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
