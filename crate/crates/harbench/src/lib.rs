//! Baseline engine for human-activity-recognition workflows.
//!
//! Given a labeled multi-sensor time series and a plain-text configuration
//! file, the engine runs a fixed-order pipeline — imputation, noise
//! filtering, representation (raw / windows / per-window features),
//! train/test splitting, normalization, feature selection, class
//! balancing — then grid-search-trains a bank of pattern-recognition
//! models and emits standardized performance reports so different
//! methodologies can be compared on equal footing.
//!
//! The two entry points mirror the CLI subcommands:
//! [`dataset::compute_stats`] for exploratory statistics and
//! [`pipeline::run`] for a full training run.

pub mod cleaning;
pub mod config;
pub mod dataset;
pub mod evaluation;
pub mod models;
pub mod pipeline;
pub mod preprocessing;
pub mod representation;

mod error;
pub(crate) mod linalg;
pub(crate) mod numeric;
pub mod rng;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
