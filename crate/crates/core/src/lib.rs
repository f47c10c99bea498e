pub mod config;
pub mod discretize;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod physics;
pub mod sequence;
pub mod spectra;

pub use error::{Error, Result};
