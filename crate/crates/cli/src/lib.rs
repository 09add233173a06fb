//! The `solitonlab` command line: flags, run configurations and report files.

pub mod args;
pub mod config;
pub mod error;
pub mod run;

pub use config::{Mode, RunConfig, RunDocument};
pub use error::CliError;
