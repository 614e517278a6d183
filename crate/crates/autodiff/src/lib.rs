//! Minimal dense-tensor reverse-mode differentiation.
//!
//! Provides exactly what convolutional encoder/decoder GANs need: strided 2D
//! and 1D (transposed) convolutions, pointwise activations, channel
//! concatenation, batch normalization, the adversarial and L1 losses, an Adam
//! optimizer, and a finite-difference gradient checker.
//!
//! Layout is channels-last throughout (`N×H×W×C`, `N×T×C`).

pub mod adam;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod scalar;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use conv::Padding;
pub use error::{AutodiffError, Result};
pub use graph::{Graph, Var, BATCH_NORM_EPS, LOG_CLAMP};
pub use scalar::Scalar;
pub use tensor::Tensor;
