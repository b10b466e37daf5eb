//! Seeded Monte Carlo campaigns over random sequences: configuration,
//! per-trial metrics, resumable execution, summaries and plot data.

pub mod config;
pub mod error;
pub mod experiments;
pub mod plotdata;
pub mod runner;
pub mod summary;

pub use error::{LabError, Result};
