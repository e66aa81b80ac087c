//! Experiment runner for `holokan`: configuration, checkpoints, result
//! tables and the subcommands behind the `holokan` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod pgm;
pub mod run;
pub mod table;

pub use checkpoint::{Architecture, Checkpoint, TrainingMeta};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use table::{Cell, ResultTable};
