//! Cross-modal transfer learning from vision to haptic, audio and motor
//! sensing for recognising a hidden object inside a swung box.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`] is a small deterministic neural-network substrate (tensors,
//!   conv/deconv/dense/LSTM layers, VAE helpers, Adam, gradient checking).
//! * [`sim`] simulates the box, the object inside it and the five sensor
//!   streams, and renders top-down snapshots.
//! * [`data`] encodes ground truth, normalises channels, slices windows and
//!   persists dataset bundles.
//! * [`vision`] is the phase-1 convolutional VAE with a prediction head.
//! * [`ha`] is the phase-2 encoder/LSTM predictor and the latent warm start.
//! * [`analysis`] holds metrics, PCA, the output low-pass filter and the
//!   simulated online prediction loop.
//!
//! Data-parallel loops (minibatch gradients, sequence simulation, batch
//! evaluation) go through [`par::Exec`], which uses rayon when the
//! `parallel` feature is enabled and otherwise runs sequentially. Both paths
//! produce bit-identical results.

pub mod analysis;
pub mod data;
pub mod error;
pub mod ha;
pub mod nn;
pub mod par;
pub mod rng;
pub mod sim;
pub mod store;
pub mod vision;

pub use error::{Error, Result};
