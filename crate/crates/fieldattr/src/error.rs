use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AppError>;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] fieldattr_core::Error),

    #[error("{0}")]
    Stage(String),
}

impl AppError {
    /// Process exit status: 2 for bad configuration or unreadable inputs,
    /// 1 for everything that fails while computing or writing.
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) | AppError::Input { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn input(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        AppError::Input { path: path.into(), message: message.to_string() }
    }
}
