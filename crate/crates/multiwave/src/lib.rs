//! Simulation harness, configuration files, CSV formats and command-line
//! plumbing around [`multiwave_core`].

pub use multiwave_core as core;

pub mod config;
pub mod designfile;
pub mod emit;
pub mod error;
pub mod harness;
pub mod io;

pub use config::{ExperimentConfig, OptimalityMode, StrategyKind};
pub use error::{Error, Result};
pub use harness::{run_experiment, CellRow, EreRow, Experiment, ResultTable};
