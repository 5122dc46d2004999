//! Config-driven experiment runner for `perron-core`.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Diagnostic, ExperimentConfig};
pub use run::{run, RunError, RunManifest, RunOutcome, Summary};
