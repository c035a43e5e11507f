//! Configuration, experiment drivers and output writers behind the `bpsim`
//! binary.

pub mod commands;
pub mod config;
pub mod error;

pub use config::ExperimentConfig;
pub use error::CliError;
