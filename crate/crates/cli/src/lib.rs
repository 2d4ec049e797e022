//! Library side of the `lessvit` command: every subcommand is a function
//! returning its output records, so tests can drive them in-process.

pub mod commands;
pub mod config;
pub mod dataset;
mod error;
pub mod record;
pub mod verify;

pub use error::{CliError, Result};
