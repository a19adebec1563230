use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter, flag or dimension is inconsistent with the rest of the setup.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was attempted on a structure that is not ready for it.
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("training diverged at step {step}: loss is {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("pre-activation of unit {unit} is exactly zero; perturb the input")]
    AmbiguousActivation { unit: usize },

    #[error("{metric} is undefined: {reason}")]
    UndefinedMetric { metric: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input data; `row` is the 1-based line number when known.
    #[error("{}{message}", .row.map(|r| format!("row {r}: ")).unwrap_or_default())]
    Parse { row: Option<usize>, message: String },

    #[error("bad container: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(row: Option<usize>, message: impl Into<String>) -> Self {
        Error::Parse {
            row,
            message: message.into(),
        }
    }
}
