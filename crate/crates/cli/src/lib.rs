//! Pipeline orchestration for the `ecsi` binary: configuration, file
//! formats and subcommands.

pub mod atomic;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod format;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
