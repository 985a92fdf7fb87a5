//! Attribution maps for ReLU networks.
//!
//! A ReLU network evaluated at a fixed input is an affine map of its input
//! and biases. This crate records the activation pattern of a forward pass,
//! runs masked reverse sweeps over that pattern, and learns per-unit masks
//! that split the output logit into positive, negative and nuisance linear
//! terms (disentangled masked backpropagation, DMBP). Baseline attribution
//! methods and insertion-style metrics are included for comparison.

pub mod baselines;
pub mod dmbp;
pub mod error;
pub mod imaging;
pub mod linearize;
pub mod manifest;
pub mod method;
pub mod metrics;
pub mod network;
pub mod ops;
pub mod synth;
pub mod tensor;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
