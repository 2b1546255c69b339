//! Command layer shared by the `uir` binary and the integration tests.

mod commands;
mod config;
pub mod gradcheck;

pub use commands::{cmd_eval, cmd_gradcheck, cmd_infer, cmd_summary, cmd_train, restore, run, SIZE_MULTIPLE};
pub use config::{CliOverrides, Command, RunConfig, RunPaths};
