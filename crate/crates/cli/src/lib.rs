//! Configuration, file formats, experiments and the command line of the
//! spikegrid co-simulator.
//!
//! The numerical work lives in [`spikegrid_core`]; this crate adds what
//! needs `std`: JSON configuration documents, CSV and JSON outputs, a
//! parallel sweep runner and the summary tables.

pub mod config;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod runner;
pub mod summary;

pub use config::{validate_config, ExperimentKind, ExperimentPlan};
pub use error::{CliError, Result};
pub use runner::{run_experiment, RunManifest, RunOutcome};
pub use summary::{summarize, Summary};
