use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse scenario: {0}")]
    ScenarioParse(#[from] serde_json::Error),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{what} outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("simplex did not converge: {0}")]
    Numerical(String),

    #[error("model is infeasible")]
    Infeasible,

    #[error("time limit reached without an integer-feasible solution")]
    NoIncumbent,

    #[error("model has {binaries} binary variables, above the limit of {limit}")]
    TooManyBinaries { binaries: usize, limit: usize },

    #[error("invalid MPS input at line {line}: {msg}")]
    Mps { line: usize, msg: String },

    #[error("invalid experiment: {0}")]
    Experiment(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
