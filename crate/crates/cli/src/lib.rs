//! Library side of the `debias-cbm` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod seeds;

pub use commands::{execute, Command, Invocation};
pub use config::RunConfig;
pub use error::CliError;
pub use manifest::Manifest;
pub use seeds::resolve_seeds;
