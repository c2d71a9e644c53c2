//! Spiking neural networks with input-aware dynamic timesteps.
//!
//! The crate trains small convolutional SNNs with surrogate gradients,
//! stops inference per input once the normalized entropy of the accumulated
//! output drops below a threshold, and prices each inference on an
//! analytical in-memory-computing crossbar model.

pub mod data;
pub mod error;
pub mod exit;
pub mod imc;
pub mod numerics;
pub mod snn;
pub mod training;

pub use error::{Error, Result};
pub use numerics::Tensor;
