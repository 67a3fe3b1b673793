//! Experiment harness: configuration, sweeps and the command implementations
//! behind the CLI.

pub mod commands;
pub mod config;
pub mod sweep;

pub use commands::CommandError;
pub use config::{ExperimentConfig, Profile, Selector};
pub use sweep::{run_sweep, SweepReport};
