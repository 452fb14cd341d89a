//! Command-line front end for `maintcause-core`: file formats, the five
//! subcommands and resumable multi-threaded sweeps.
//!
//! Every file written here starts with a `schema_version` field and embeds
//! the config hash and seed it was produced from. Identical config and seed
//! give byte-identical files.

pub mod commands;
pub mod config;
pub mod error;
pub mod models;
pub mod report;
pub mod store;
pub mod sweep;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
