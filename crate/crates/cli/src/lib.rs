//! Configuration and pipeline stages behind the `poptail` binary.

pub mod commands;
pub mod config;

pub use config::ExperimentConfig;
