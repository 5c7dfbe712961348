//! Process exit statuses and the error type carrying them.

use std::fmt;

use grasp_totp::config::ConfigError;
use grasp_totp::Error;

/// Stable exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    /// Unexpected solver or I/O failure.
    Failure = 1,
    Parse = 2,
    Singular = 3,
    StaticallyInfeasible = 4,
    NotConverged = 5,
    InsufficientData = 6,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    pub fn new(status: ExitStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(ExitStatus::Parse, message)
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        Self::new(ExitStatus::Failure, format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub fn status_of(e: &Error) -> ExitStatus {
    match e {
        Error::SingularSystem { .. } | Error::DegenerateGripper { .. } => ExitStatus::Singular,
        Error::StaticallyInfeasible { .. } => ExitStatus::StaticallyInfeasible,
        Error::InsufficientData(_) => ExitStatus::InsufficientData,
        Error::InvalidInput(_) | Error::InvalidTransform(_) | Error::DimensionMismatch { .. } | Error::NonPlanarGripper { .. } => {
            ExitStatus::Parse
        }
        Error::LpInfeasible { .. } | Error::LpUnbounded | Error::NumericalFailure(_) => ExitStatus::Failure,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::new(status_of(&e), e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let status = match &e {
            ConfigError::Io { .. } | ConfigError::Parse { .. } => ExitStatus::Parse,
            ConfigError::Invalid { source, .. } => status_of(source),
        };
        Self::new(status, e.to_string())
    }
}
