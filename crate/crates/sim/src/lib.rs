//! Experiment harness for the plurality consensus simulator: configuration,
//! edge-list files, seeded sweeps with CSV and JSON output, scaling reports
//! and parallel drivers for the statistical checks.

pub mod cli;
pub mod config;
pub mod edgelist;
pub mod report;
pub mod sweep;
pub mod verify;

pub use config::ExperimentSpec;
pub use sweep::{run_sweep, SweepResult};
