//! Sweep orchestration and table export for the `mcrx` command-line tool.

pub mod presets;
pub mod runners;
pub mod spec;
pub mod table;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<mcrx::Error> for CliError {
    fn from(e: mcrx::Error) -> Self {
        use mcrx::Error as E;
        match e {
            E::NumericFailure(_) | E::Degenerate(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
