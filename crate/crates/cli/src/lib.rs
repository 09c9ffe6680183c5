//! Command-line experiments: normal-form sweeps, student-teacher training,
//! kernel landscapes and probes.

pub mod analysis;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod teacher;

pub use cli::run;
pub use error::CliError;

use sntk_core::train::{detect_bifurcation, TrainOutcome};

pub(crate) fn train_crossings(o: &TrainOutcome<f64>) -> Vec<usize> {
    detect_bifurcation(&o.metrics)
}
