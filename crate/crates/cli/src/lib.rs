//! Library side of the `sdha` command: config parsing, experiments and checks.

pub mod commands;
pub mod config;
mod csv;
mod experiment;

use std::path::PathBuf;

use sdha::tableau_io::TableauParseError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sdha(#[from] sdha::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Tableau { path: PathBuf, source: TableauParseError },
    #[error("incompatible setup: {0}")]
    Incompatible(String),
    #[error("{0}")]
    Env(String),
}

/// Non-error results and their exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// More than 1% of paths failed.
    Degraded,
    /// Biases not resolved above Monte Carlo noise.
    Inconclusive,
    /// A condition or tolerance check failed.
    Violated,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Degraded | Outcome::Inconclusive => 2,
            Outcome::Violated => 3,
        }
    }
}
