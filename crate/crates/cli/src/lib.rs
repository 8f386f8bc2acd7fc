//! Library side of the `gapsched` command-line tool: configuration, the five
//! subcommands and their artifacts.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::Context;
pub use config::RunConfig;
pub use error::CliError;
