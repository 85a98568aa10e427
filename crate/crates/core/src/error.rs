use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{path}:{line}: page `{page}` references unknown book `{book}`")]
    DanglingBook {
        path: PathBuf,
        line: u64,
        page: String,
        book: String,
    },

    #[error("{path}:{line}: user `{user}` likes unknown page `{page}`")]
    DanglingPage {
        path: PathBuf,
        line: u64,
        user: String,
        page: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("truncated SVD did not converge after {iterations} iterations (relative residual {residual:e})")]
    SvdNotConverged { iterations: usize, residual: f64 },

    #[error("lasso did not converge after {sweeps} sweeps (last objective {objective})")]
    LassoNotConverged { sweeps: usize, objective: f64 },

    #[error("input has no variance")]
    NoVariance,

    #[error("cluster {0} has no members")]
    EmptyCluster(usize),

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error("io error on {path}: {source}")]
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
