use std::path::{Path, PathBuf};

use evidencer_core::EvidenceError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: line {line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
    pub const PARTIAL: i32 = 4;
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// Numerical breakdowns map to 3, everything attributable to the inputs to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Evidence(
                EvidenceError::Estimation(_) | EvidenceError::Decomposition { .. } | EvidenceError::Numerical(_),
            ) => exit::NUMERIC,
            _ => exit::CONFIG,
        }
    }
}
