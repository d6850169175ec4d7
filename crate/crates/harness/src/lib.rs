//! Experiment harness for the retraining-cost indices: configuration,
//! suite runners with resumable JSONL records, correlation reports, and the
//! `resque` CLI.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod records;
pub mod report;
pub mod suite;

pub use error::{HarnessError, Result};
