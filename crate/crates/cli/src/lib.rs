//! Command-line driver: config parsing, network notation and the
//! `fetch`/`train`/`eval`/`gradcheck`/`figure1` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod fetch;
pub mod netspec;

pub use config::ExperimentConfig;
pub use error::CliError;
