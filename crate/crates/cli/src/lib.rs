//! Command-line front end. The binary is a thin clap layer over
//! [`commands`] and [`pipeline`].

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
