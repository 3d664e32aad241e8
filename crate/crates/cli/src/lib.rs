//! Experiment orchestration for the freqshield toolkit: configuration,
//! staged artifacts on disk, and the commands behind the `freqshield` binary.

pub mod config;
pub mod error;
pub mod stages;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use stages::{cmd_all, cmd_attack, cmd_evaluate, cmd_prepare, cmd_train, Layout, TrainWhich};
