//! Library side of the `strata` command-line tool.
//!
//! Each subcommand is a function here so that it can be driven from tests
//! without spawning the binary.

pub mod commands;
pub mod config;
pub mod report;

use thiserror::Error;

pub use commands::{run_optimize, OptimizeSettings};
pub use config::{FrameConfig, RunConfig};
pub use report::{report_compare, DomainReport, OptimizeReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("cannot write output: {0}")]
    Output(String),
    #[error("{failed} of {total} domains failed; see {manifest}")]
    DomainFailure {
        failed: usize,
        total: usize,
        manifest: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Output(_) => EXIT_INPUT,
            CliError::DomainFailure { .. } => EXIT_DOMAIN,
        }
    }
}

impl From<strata_core::Error> for CliError {
    fn from(e: strata_core::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
