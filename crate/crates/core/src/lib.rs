//! Sequence classification engine for fixed-length 1-D signals.
//!
//! The crate bundles everything needed to reproduce the four-class signal
//! classification pipeline end to end on a CPU:
//!
//! - [`tensor`]: dense f32/f64 tensors backed by strided matrix kernels.
//! - [`autodiff`]: a reverse-mode tape recording layer operations.
//! - [`nn`]: dilated causal convolutions, weight normalization, activations,
//!   dropout, layer norm, pooling, softmax.
//! - [`model`]: the dilated residual classifier and the temporal
//!   convolutional baseline.
//! - [`loss`] / [`optim`]: focal loss with inverse-frequency class weights,
//!   Adam with coupled L2, gradient accumulation.
//! - [`data`]: dataset container, z-score normalization, leakage-free
//!   splitting, batching with a dominance audit, synthetic signal generator.
//! - [`train`]: the epoch loop with the adaptive dropout controller, early
//!   stopping and checkpointing.
//! - [`metrics`]: confusion matrices, precision/recall/F1, macro averages,
//!   one-vs-rest AUC, report rendering.
//! - [`gradcheck`]: finite-difference oracle for validating backward rules.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{DType, Scalar, Tensor};
