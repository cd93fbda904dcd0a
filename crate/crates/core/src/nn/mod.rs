//! Hand-written forward and backward passes for the network's layer
//! vocabulary, plus parameter and FLOP accounting.
//!
//! Gradients are exact (no graph machinery): each op has a `_backward`
//! companion that consumes the forward inputs and the output gradient.
//! Convolutions are cross-correlations with zero "same" padding.

mod layers;
mod ops;

pub use layers::{Conv1d, DwConv1d, Grn, InitCtx, Linear, PwConv1d};
pub use ops::{
    conv1d, conv1d_backward, dwconv1d, dwconv1d_backward, gelu, gelu_backward, grn, grn_backward,
    irfft_time, irfft_time_backward, pwconv1d, pwconv1d_backward, rfft_time, rfft_time_backward,
    sigma_embedding,
};
