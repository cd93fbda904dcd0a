//! Iterative radix-2 complex FFT.
//!
//! Shared by the STFT analysis in `dsp` and the spectral branch of the
//! network. Twiddles are evaluated per call from double-precision trig (no
//! recurrence drift); lengths must be powers of two.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// In-place FFT (inverse applies the 1/n scale).
pub fn fft_inplace<T: Scalar>(data: &mut [Complex<T>], inverse: bool) -> Result<()> {
    let n = data.len();
    if !is_power_of_two(n) {
        return Err(Error::invalid(format!(
            "fft length must be a power of two, got {n}"
        )));
    }
    if n == 1 {
        return Ok(());
    }

    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * std::f64::consts::PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let angle = step * k as f64;
                let w = Complex::new(T::of(angle.cos()), T::of(angle.sin()));
                let a = data[start + k];
                let b = data[start + k + half] * w;
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }

    if inverse {
        let scale = T::of(1.0 / n as f64);
        for v in data.iter_mut() {
            *v = Complex::new(v.re * scale, v.im * scale);
        }
    }
    Ok(())
}

/// One-sided FFT of a real signal: n/2 + 1 bins.
pub fn rfft<T: Scalar>(x: &[T]) -> Result<Vec<Complex<T>>> {
    let n = x.len();
    let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft_inplace(&mut buf, false)?;
    buf.truncate(n / 2 + 1);
    Ok(buf)
}

/// Inverse of [`rfft`]: reconstructs n real samples from n/2 + 1 bins.
///
/// The imaginary parts of the DC and Nyquist bins are ignored, matching the
/// real-signal symmetry the transform represents.
pub fn irfft<T: Scalar>(spec: &[Complex<T>], n: usize) -> Result<Vec<T>> {
    if !is_power_of_two(n) {
        return Err(Error::invalid(format!(
            "irfft length must be a power of two, got {n}"
        )));
    }
    if spec.len() != n / 2 + 1 {
        return Err(Error::invalid(format!(
            "irfft expects {} bins for length {n}, got {}",
            n / 2 + 1,
            spec.len()
        )));
    }
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    buf[0] = Complex::new(spec[0].re, T::zero());
    buf[n / 2] = Complex::new(spec[n / 2].re, T::zero());
    for k in 1..n / 2 {
        buf[k] = spec[k];
        buf[n - k] = spec[k].conj();
    }
    fft_inplace(&mut buf, true)?;
    Ok(buf.iter().map(|c| c.re).collect())
}
