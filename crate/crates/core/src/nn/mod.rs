//! Minimal deterministic neural-network substrate.
//!
//! Layers are written as explicit forward/backward pairs over flat row-major
//! slices. Everything is generic over [`Scalar`] so the same code runs in
//! 32-bit for training and 64-bit for gradient checking.

pub mod adam;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod params;
pub mod scalar;
pub mod tensor;
pub mod vae;

pub use adam::{AdamConfig, AdamState};
pub use conv::{conv2d_forward, deconv2d_forward, Conv2d, Deconv2d};
pub use dense::{dense_forward, Activation};
pub use gradcheck::{grad_check, GradCheck};
pub use loss::mse;
pub use lstm::{CandidateActivation, Lstm, LstmCache};
pub use params::{Gradients, ParamId, ParamSet};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use vae::{kl_divergence, reparameterize};
