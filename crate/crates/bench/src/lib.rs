//! Experiment harness for `rbds-core`: configuration, seeded repetitions,
//! reports and the `rbds` command-line tool.

pub mod config;
pub mod experiment;
pub mod report;
pub mod seeds;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, sweep};
pub use report::ExperimentReport;
