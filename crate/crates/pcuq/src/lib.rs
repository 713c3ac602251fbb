//! Command-line driver for `pcuq-core`: run configuration, CSV file formats,
//! the run manifest and the subcommands behind the `pcuq` binary.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod manifest;

pub use commands::{run, Command};
pub use config::{Method, Overrides, RunConfig};
pub use error::CliError;
