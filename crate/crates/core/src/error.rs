use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("observation schema mismatch: file uses {found}, builder expects {expected}")]
    SchemaMismatch { found: String, expected: String },
    #[error("{path}:{line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("world fault: {0}")]
    WorldFault(String),
    #[error("planner produced a non-finite cost; problem: {0}")]
    PlannerNonFinite(String),
    #[error("{0}")]
    Precondition(String),
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    /// Stable machine-readable error class.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Checkpoint(_) => "checkpoint",
            Error::SchemaMismatch { .. } => "schema_mismatch",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Diverged(_) => "diverged",
            Error::WorldFault(_) => "world_fault",
            Error::PlannerNonFinite(_) => "planner_non_finite",
            Error::Precondition(_) => "precondition",
        }
    }
}
