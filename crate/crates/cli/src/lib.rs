//! Experiment runner for mean-field kernel estimation: configuration,
//! CSV artifact formats and the pipeline behind the `meanfield` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod formats;
pub mod run;

pub use config::ExperimentConfig;
pub use error::{Stage, StageError};
pub use run::{run, run_experiment, Verb};
