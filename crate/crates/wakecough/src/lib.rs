//! File formats, corpus builders and experiment pipelines around
//! [`wakecough_core`].

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod grid;
pub mod manifest;
pub mod pipeline;
pub mod tables;
pub mod wav;

pub use error::{Error, Result};
pub use wakecough_core as core;
