use std::path::{Path, PathBuf};

use ksum_core::Error as CoreError;
use thiserror::Error;

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Config = 1,
    PartialFailure = 2,
    Io = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Bad inputs map to 1, solver breakdowns to 2, file system trouble to 3.
    pub fn exit_status(&self) -> ExitStatus {
        match self {
            CliError::Config(_) => ExitStatus::Config,
            CliError::Io { .. } => ExitStatus::Io,
            CliError::Core(e) => match e {
                CoreError::Io { .. } => ExitStatus::Io,
                CoreError::Csv(c) if c.is_io_error() => ExitStatus::Io,
                CoreError::Infeasible(_) | CoreError::NotConverged(_) => ExitStatus::PartialFailure,
                _ => ExitStatus::Config,
            },
        }
    }
}
