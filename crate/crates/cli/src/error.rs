use boltzmann_core::KineticError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A run finished but at least one report failed.
    #[error("failed checks: {0}")]
    Failed(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Kinetic(#[from] KineticError),
}

/// Error record printed to stderr as one JSON line.
#[derive(Debug, Serialize)]
pub struct ErrorRecord<'a> {
    pub error: &'a str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    /// 0 success, 1 numerical failure, 2 usage or configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) | CliError::Csv(_) => 2,
            CliError::Kinetic(KineticError::Config(_)) => 2,
            CliError::Failed(_) | CliError::Kinetic(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) | CliError::Kinetic(KineticError::Config(_)) => "config-invalid",
            CliError::Failed(_) => "check-failed",
            CliError::Io(_) | CliError::Csv(_) => "io",
            CliError::Kinetic(_) => "numerical",
        }
    }

    pub fn record(&self) -> ErrorRecord<'_> {
        ErrorRecord { error: self.kind(), message: self.to_string(), exit_code: self.exit_code() }
    }
}
