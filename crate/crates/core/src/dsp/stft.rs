//! Short-time Fourier transform.
//!
//! Frames start at multiples of `hop` from sample 0; the tail is zero-padded
//! to complete the final frame (no centering). Default analysis settings are
//! n_fft = 2048, hop = 512, periodic Hann.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::{is_power_of_two, rfft};
use crate::scalar::Scalar;

use super::AudioClip;

pub const DEFAULT_N_FFT: usize = 2048;
pub const DEFAULT_HOP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            // periodic Hann
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

/// One-sided complex spectrogram, frames x bins, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<Complex<T>>,
    pub n_fft: usize,
    pub hop: usize,
    pub window: Window,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn value(&self, frame: usize, bin: usize) -> Complex<T> {
        self.values[frame * self.bins + bin]
    }

    pub fn magnitude(&self, frame: usize, bin: usize) -> f64 {
        let v = self.value(frame, bin);
        v.re.into_f64().hypot(v.im.into_f64())
    }
}

/// STFT with the default 2048/512 Hann analysis (1025 bins).
pub fn stft<T: Scalar>(clip: &AudioClip<T>) -> Result<Spectrogram<T>> {
    stft_with(clip, DEFAULT_N_FFT, DEFAULT_HOP, Window::Hann)
}

pub fn stft_with<T: Scalar>(
    clip: &AudioClip<T>,
    n_fft: usize,
    hop: usize,
    window: Window,
) -> Result<Spectrogram<T>> {
    if !is_power_of_two(n_fft) {
        return Err(Error::invalid(format!(
            "n_fft must be a power of two, got {n_fft}"
        )));
    }
    if hop == 0 {
        return Err(Error::invalid("hop must be positive"));
    }
    if clip.is_empty() {
        return Err(Error::invalid("cannot stft an empty clip"));
    }

    let t = clip.len();
    // Pad the tail so the last frame covers the final sample.
    let frames = if t <= n_fft {
        1
    } else {
        1 + (t - n_fft).div_ceil(hop)
    };
    let coeffs = window.coefficients(n_fft);
    let bins = n_fft / 2 + 1;
    let mut values = Vec::with_capacity(frames * bins);
    let mut frame_buf = vec![T::zero(); n_fft];
    for k in 0..frames {
        let start = k * hop;
        for (i, slot) in frame_buf.iter_mut().enumerate() {
            let idx = start + i;
            let s = if idx < t {
                clip.samples[idx].into_f64()
            } else {
                0.0
            };
            *slot = T::of(s * coeffs[i]);
        }
        values.extend(rfft(&frame_buf)?);
    }
    Ok(Spectrogram {
        frames,
        bins,
        values,
        n_fft,
        hop,
        window,
    })
}
