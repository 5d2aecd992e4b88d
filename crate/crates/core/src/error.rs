use std::path::PathBuf;

use crate::solver::SolveStatus;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid instance: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidInstance(Vec<crate::instance::Violation>),

    #[error("failed to parse {path}: {message} (line {line}, column {column})")]
    Parse {
        path: PathBuf,
        message: String,
        line: usize,
        column: usize,
    },

    #[error("unsupported instance schema version {found} (expected {expected})")]
    SchemaVersion { found: u64, expected: u64 },

    #[error("{context}: solver returned {status:?}")]
    Solver {
        context: String,
        status: SolveStatus,
    },

    #[error("problem too large for the dense oracle: {variables} variables (limit {limit})")]
    SizeGuard { variables: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn solver(context: impl Into<String>, status: SolveStatus) -> Self {
        Error::Solver {
            context: context.into(),
            status,
        }
    }
}
