//! File formats and the command-line driver for `dpfe_core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod curve_csv;
pub mod dataset_io;
pub mod error;
pub mod report;
pub mod world_io;

pub use error::{Error, Result};
