use std::path::PathBuf;

use mov_core::{Error as CoreError, ErrorCategory, ModelKind};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const CHECK_FAILED: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{model}, fold {fold}: {source}")]
    Fold {
        model: ModelKind,
        fold: usize,
        #[source]
        source: CoreError,
    },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {}", .problems.join("; "))]
    Csv { path: PathBuf, problems: Vec<String> },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        let core = |e: &CoreError| match e.category() {
            ErrorCategory::Config => exit::CONFIG,
            ErrorCategory::Data => exit::DATA,
            ErrorCategory::Numeric => exit::NUMERIC,
        };
        match self {
            CliError::Core(e) | CliError::Fold { source: e, .. } => core(e),
            CliError::Config { .. } => exit::CONFIG,
            CliError::Csv { .. } | CliError::Checkpoint { .. } | CliError::Io { .. } => exit::DATA,
            CliError::CheckFailed(_) => exit::CHECK_FAILED,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
