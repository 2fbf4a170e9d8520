use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Row {
        file: String,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("similarity undefined: {0}")]
    UndefinedSimilarity(&'static str),

    #[error("no stored vector for id {0:?}")]
    MissingVector(String),

    #[error("remote call failed after {attempts} attempt(s): {message}")]
    Remote {
        message: String,
        attempts: u32,
        retryable: bool,
    },

    #[error("could not parse a sentiment label from {0:?}")]
    LabelParse(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures a caller may retry (remote timeouts, 5xx, connection resets).
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Error::Remote {
                retryable: true,
                ..
            }
        )
    }

    /// Short machine-readable tag used in CLI error output and audit records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Row { .. } => "row",
            Error::InvalidInput(_) => "invalid_input",
            Error::Config(_) => "config",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::UndefinedSimilarity(_) => "undefined_similarity",
            Error::MissingVector(_) => "missing_vector",
            Error::Remote { .. } => "remote",
            Error::LabelParse(_) => "label_parse",
            Error::Divergence(_) => "divergence",
            Error::Empty(_) => "empty",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
