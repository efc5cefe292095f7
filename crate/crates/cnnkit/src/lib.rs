//! Dataset preparation, training runs, evaluation reports and the file
//! formats around [`cnnkit_core`].

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod fit;
pub mod fsutil;
pub mod loader;
pub mod nct;
pub mod ppm;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
