//! Batch experiment runner: configuration, suites and machine-readable
//! results for the `slowfast` binary.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{ConfigError, Experiment, ExperimentConfig, Suite};
pub use report::{Bound, ResultRow, Summary};
pub use runner::run_experiment;

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const FAIL: u8 = 1;
    pub const CONFIG: u8 = 2;
}
