//! Speech enhancement by adversarial spectral feature mapping: corpus
//! synthesis, log-Mel features, FSEGAN/SEGAN models, training and evaluation.

pub mod dsp;
pub mod error;
pub mod fsio;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
