use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("format error at offset {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("insufficient data for class {class}: need {needed}, have {available}")]
    Capacity {
        class: u32,
        needed: usize,
        available: usize,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("solution parse error: {0}")]
    SolutionParse(String),

    #[error("training failed: {0}")]
    TrainingFailure(String),

    #[error("enumeration too large: {assignments} assignments exceed the limit of {limit}")]
    EnumerationTooLarge { assignments: f64, limit: u64 },

    #[error("ensemble build failed for subsets {failed:?}")]
    EnsembleBuild { failed: Vec<Vec<u32>> },

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
