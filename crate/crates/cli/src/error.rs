use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config fields or instance documents. Nothing has run yet.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A decode or verification check failed after the pipeline ran.
    #[error("{0}")]
    Failure(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(1),
            CliError::Failure(_) => ExitCode::from(2),
            CliError::Io { .. } => ExitCode::from(3),
        }
    }
}

/// Core validation errors already name the violated constraint.
macro_rules! config_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Config(e.to_string())
            }
        }
    )*};
}

config_from!(
    wmr_core::ModelError,
    wmr_core::metrics::MetricsError,
    wmr_core::scheduler::ScheduleError
);
