//! Configuration, subcommands and output writers for the `opchain` binary.

pub mod bench;
pub mod commands;
pub mod config;
pub mod output;
pub mod report;

pub use commands::{CliError, Command, Outcome};
pub use config::{ConfigError, RunConfig};
