//! Command-line front end: configuration, dataset encoding and the commands
//! behind the `skinflow` binary.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

pub use commands::{run, Command, Figure};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
