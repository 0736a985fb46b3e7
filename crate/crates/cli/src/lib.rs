//! Experiment driver: reads a flat config, runs one study, writes CSV and
//! JSON artifacts.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{ConfigError, ExperimentConfig, InitialLaw, Kind};
pub use experiments::{run, RunError, Summary};
