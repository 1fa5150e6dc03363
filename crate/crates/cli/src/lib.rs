//! Pipeline behind the `mecplan` command: trace ingest or synthesis,
//! enrichment, topology, planning, metrics and artifact output.

pub mod config;
pub mod output;
pub mod pipeline;

use std::path::Path;

use thiserror::Error;

pub use config::{validate_config, ExperimentConfig, LatencyLimits, Planning, TraceSource};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Infeasible(m) => m,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Infeasible(_) => 4,
        }
    }
}
