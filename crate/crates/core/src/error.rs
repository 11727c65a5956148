use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The relation's applicability predicate rejected the source label.
    #[error("relation `{relation}` is not applicable to label {label}")]
    Applicability { relation: String, label: u8 },

    #[error(
        "relation `{relation}` needs {needed} applicable source samples but only {available} exist"
    )]
    ApplicabilityShortage {
        relation: String,
        needed: usize,
        available: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{}: {message} (byte offset {offset})", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("requested {requested} samples from a set of {available}")]
    Size { requested: usize, available: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("t statistic undefined: {0}")]
    Degenerate(String),

    #[error("cannot evaluate on an empty set")]
    EmptySet,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
