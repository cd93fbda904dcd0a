//! Diffusion-based audio super-resolution at desk scale.
//!
//! The crate bundles everything the pipeline needs: WAV I/O and resampling
//! (`dsp`), a hand-written tensor/NN layer set with exact backward passes
//! (`tensor`, `nn`), the denoiser network (`model`), the diffusion math —
//! preconditioning, noise schedule, probability-flow Euler sampler (`edm`),
//! a reproducible training loop with binary checkpoints (`train`), and the
//! evaluation metrics (`metrics`).
//!
//! Core numerics are generic over the scalar type ([`Scalar`], f32/f64); the
//! pipeline default is f64 ([`Real`]).

pub mod dsp;
pub mod edm;
pub mod error;
pub mod fft;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default pipeline scalar.
pub type Real = f64;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type AudioClip32 = dsp::AudioClip<f32>;
pub type AudioClip64 = dsp::AudioClip<f64>;
// DenoiserNet64 alias added once model lands
