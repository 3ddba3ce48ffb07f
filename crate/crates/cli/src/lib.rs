//! Library side of the `oscnet` command-line tool: configuration files and
//! the command implementations, usable from tests without spawning a process.

pub mod commands;
pub mod config;
pub mod error;

pub use config::ExperimentConfig;
pub use error::CliError;
