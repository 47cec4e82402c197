use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::MetricsError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {message}", path.display())]
    Schema { path: PathBuf, message: String },

    #[error("config {}: {source}", path.display())]
    Config { path: PathBuf, source: serde_json::Error },

    #[error(transparent)]
    Metrics(#[from] MetricsError),

    #[error(transparent)]
    Core(#[from] lgpose_core::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 for bad input, 3 for an infeasible gait, 4 for
    /// numerical failure inside the filter.
    pub fn exit_code(&self) -> u8 {
        use lgpose_core::Error as Core;
        match self {
            CliError::Io { .. } | CliError::Schema { .. } | CliError::Config { .. } | CliError::Metrics(_) => 2,
            CliError::Core(e) => match e.root() {
                Core::InfeasibleGait(_) => 3,
                Core::InvalidParams(_) => 2,
                _ => 4,
            },
        }
    }
}
