//! Numerical core for cough spotting and cougher identification.
//!
//! Everything in this crate is a pure function of its inputs and builds
//! without `std`; file formats, corpus handling and the CLI live in the
//! `wakecough` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod audio;
pub mod classifiers;
pub mod cougher;
pub mod cnn;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod features;
pub mod fft;
pub mod ivector;
pub mod linalg;
pub mod optim;
pub mod pca;
pub mod rng;
pub mod synth;
pub mod ubm;

pub use error::{Error, Result};
