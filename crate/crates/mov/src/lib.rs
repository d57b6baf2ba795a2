//! Files, configuration and the command-line runner around `mov-core`.
//!
//! CSV feature tables with `<view>_f<j>` columns, MOV1 checkpoints, JSON
//! and TOML run configs, a threaded cross-validation runner and the report
//! writers used by the `mov` binary.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csvio;
pub mod error;
pub mod report;
pub mod runner;

pub use error::{exit, CliError, Result};
