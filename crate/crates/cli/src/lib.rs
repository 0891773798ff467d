//! Pipeline front end: config handling and the subcommands behind the
//! `shapmon` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{RawConfig, RunConfig};
pub use error::CliError;
