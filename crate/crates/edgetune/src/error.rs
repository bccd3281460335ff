use std::path::PathBuf;

use edgetune_core::Error as CoreError;

/// Failure of a command, carrying the process exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Infeasible(String),

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Infeasible(_) => 3,
            AppError::Data(_) | AppError::Io { .. } => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::InvalidConfig(_) | CoreError::InvalidArgument(_) => AppError::Usage(msg),
            CoreError::InfeasibleSlo { .. } => AppError::Infeasible(msg),
            CoreError::InvalidProfile(_) | CoreError::InvalidData(_) | CoreError::Parse { .. } | CoreError::IllConditioned { .. } => {
                AppError::Data(msg)
            }
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
