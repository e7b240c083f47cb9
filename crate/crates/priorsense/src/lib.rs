//! Harness, file formats and command-line front end around
//! [`priorsense_core`].

pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod output;
pub mod streams;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentResults};
pub use output::{emit_outputs, replot};
