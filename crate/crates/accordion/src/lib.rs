//! File formats, dataset loaders, run configuration and experiment commands
//! around [`accordion_core`].

pub mod codec;
pub mod commands;
pub mod compare;
pub mod config;
pub mod datasets;
mod error;
pub mod metrics;
pub mod parallel;

pub use error::{Error, Result};
