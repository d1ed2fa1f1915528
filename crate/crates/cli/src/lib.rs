//! Command-line front end: configuration, solver runs, figure and table data.

pub mod commands;
pub mod config;

pub use commands::{exit_code, RuleArg, RunContext};
pub use config::RunConfig;
