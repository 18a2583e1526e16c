//! Photon-number statistics of twin beams measured with pixelated cameras:
//! detector response matrices, a pixel-level Monte Carlo, reconstruction by
//! expectation maximization and a closed-form noise-model fit.

pub mod cli;
pub mod detmodel;
pub mod dists;
pub mod emrec;
pub mod error;
pub mod noisefit;
pub mod numeric;
pub mod simkit;

pub use error::{Error, Result};
