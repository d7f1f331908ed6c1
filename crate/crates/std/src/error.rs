use std::fmt;
use std::io;

use crate::config::ConfigError;

/// Failure of a CLI command. [`CliError::name`] is printed as the
/// machine-readable error tag.
#[derive(Debug)]
pub enum CliError {
    Core(charter_core::Error),
    Config(ConfigError),
    Io(io::Error),
    Csv(csv::Error),
}

impl CliError {
    pub fn name(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.name(),
            CliError::Config(_) => "ConfigError",
            CliError::Io(_) => "IoError",
            CliError::Csv(_) => "CsvError",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Config(e) => e.fmt(f),
            CliError::Io(e) => e.fmt(f),
            CliError::Csv(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

impl From<charter_core::Error> for CliError {
    fn from(e: charter_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e)
    }
}
