use std::io;
use std::path::Path;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum GeraError {
    /// Bad input or configuration; exit 1.
    #[error("{0}")]
    Validation(String),
    /// Store contents disagree with their digests or with replay; exit 2.
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("{path}: {error}")]
    Io { path: String, error: io::Error },
}

impl GeraError {
    pub fn exit_code(&self) -> i32 {
        match self {
            GeraError::Validation(_) | GeraError::Io { .. } => 1,
            GeraError::Integrity(_) => 2,
        }
    }

    pub fn io(path: &Path, error: io::Error) -> GeraError {
        GeraError::Io {
            path: path.display().to_string(),
            error,
        }
    }
}

pub type Result<T, E = GeraError> = std::result::Result<T, E>;

pub fn invalid(message: impl Into<String>) -> GeraError {
    GeraError::Validation(message.into())
}

pub fn integrity(message: impl Into<String>) -> GeraError {
    GeraError::Integrity(message.into())
}
