//! Experiment runner for the `mixrg` library.
//!
//! A sweep is described by an [`ExperimentConfig`], expanded into grid cells,
//! run on a worker pool with one derived seed per cell and written out as a
//! CSV table plus a JSON summary.

pub mod config;
pub mod output;
pub mod sweep;
pub mod verify;

pub use config::{ConfigError, Experiment, ExperimentConfig, RawConfig};
pub use sweep::{run, SweepResult};
pub use verify::{verify, Suite, VerifyReport};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/runner.md")]
mod book_runner {}
