//! Waveform I/O, resampling and short-time Fourier analysis.
//!
//! Everything here is a pure function of its inputs; the resampler implements
//! the fixed Kaiser-windowed-sinc design described in [`resample`].

mod resample;
mod stft;
mod wav;

pub use resample::{downsample, downsample_slice, upsample_slice, upsample_to, ResampleFilter};
pub use stft::{stft, stft_with, Spectrogram, Window};
pub use wav::{read_wav, wav_info, write_wav, WavEncoding, WavInfo};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mono waveform with its sample rate. Samples are dimensionless amplitudes,
/// nominally in [-1, 1]; intermediate processing may transiently exceed that
/// range, I/O normalization restores it.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> AudioClip<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample_rate must be positive"));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Errors if any sample is non-finite.
    pub fn validate_finite(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite sample at index {i}"
                )));
            }
        }
        Ok(())
    }
}
