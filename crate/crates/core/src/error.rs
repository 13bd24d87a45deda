use std::path::PathBuf;

use crate::grid_model::ParameterKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("distribution has no finite mean (shape {shape})")]
    NoFiniteMean { shape: f64 },

    #[error("cannot tune {parameter}: {reason}")]
    CannotTune {
        parameter: ParameterKind,
        reason: String,
    },

    #[error("gave up resampling {parameter} after {attempts} attempts")]
    ResampleExhausted {
        parameter: ParameterKind,
        attempts: usize,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed stats bundle: {0}")]
    Bundle(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
