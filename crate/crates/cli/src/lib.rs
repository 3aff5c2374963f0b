//! Configuration-driven experiment runner for `shelab-core`.
//!
//! An experiment reads a flat `key = value` configuration ([`config`]), runs
//! one or more ensembles, checks its criteria and writes `report.json`,
//! `results.csv` and optional SVG plots into the output directory.

pub mod config;
pub mod evaluate;
pub mod kernels;
pub mod plot;
pub mod report;
pub mod run;
pub mod suite;

pub use config::{parse_config, parse_config_str, resolve, serialize_config, ExperimentConfig, Kind, RawConfig};
pub use report::{Bound, Criterion, Report};
pub use run::{resume_experiment, run_experiment, Outcome, RunError, RunSettings};
