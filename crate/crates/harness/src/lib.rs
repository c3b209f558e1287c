//! Experiment layer: configuration files, synthetic problems, exact-level
//! noise, report files and the built-in reproductions of the integral-equation
//! and elliptic parameter-identification experiments.

pub mod checks;
pub mod config;
pub mod error;
pub mod experiment;
pub mod problems;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, run_study, ExperimentOutcome, RunSummary};
pub use problems::{add_noise, make_problem, Problem};
