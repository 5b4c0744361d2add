//! Command-line front end: scenario files, CSV output and the three
//! subcommands `run`, `compare` and `margin-map`.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod output;

pub use error::CliError;
