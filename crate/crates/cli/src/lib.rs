//! Configuration parsing and experiment orchestration behind the `depo` binary.

pub mod config;
pub mod experiment;

pub use config::{parse_config, parse_config_str, ConfigError, ExperimentConfig};
pub use experiment::{export_fixture, run_experiment, sweep, verify_trace, ExperimentReport};
