//! Command-line pipeline: simulate, select, fit, predict, evaluate.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use config::RunConfig;
pub use error::CliError;
