//! File formats, configuration, the training pipeline and the command line
//! built on [`limoe_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod lcam;
pub mod log;
pub mod lpcd;
pub mod pipeline;
pub mod report;
pub mod run;

pub use error::{Error, Result};
