use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed gherkin in {file} at line {line}: {reason}")]
    MalformedGherkin {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("schema error at row {row}: field `{field}` {reason}")]
    Schema {
        row: usize,
        field: String,
        reason: String,
    },

    #[error("step record at index {index} has no cluster_id (passthrough mode)")]
    MissingClusterId { index: usize },

    #[error("embedding provider unavailable: {0}")]
    EmbeddingProviderUnavailable(String),

    #[error("insufficient population: requested {requested}, available {available}")]
    InsufficientPopulation { requested: usize, available: usize },

    #[error("degenerate marginals: expected agreement is 1")]
    DegenerateMarginals,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
