//! Experiment harness for the recommender model-stealing attacks in
//! `recsteal-core`: dataset ingestion, JSON configuration, model
//! checkpoints, query logs, the seeded sweep runner, result aggregation and
//! the `recsteal` command line.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod querylog;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{AppError, Result};
pub use experiment::{run_experiment, ResultRow};
