use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft;
use crate::scalar::Scalar;
use crate::tensor::{CTensor, Tensor};

fn check_odd_kernel(k: usize) -> Result<()> {
    if k % 2 == 0 {
        return Err(Error::invalid(format!("kernel size must be odd, got {k}")));
    }
    Ok(())
}

/// Dense 1-d convolution: x (B, C_in, T) * w (C_out, C_in, k) + b (C_out),
/// zero padding (k-1)/2 on each side.
pub fn conv1d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (bn, c_in, t) = x.dims3()?;
    let (c_out, wc_in, k) = w.dims3()?;
    check_odd_kernel(k)?;
    if wc_in != c_in {
        return Err(Error::invalid(format!(
            "conv1d weight expects {wc_in} input channels, x has {c_in}"
        )));
    }
    if let Some(b) = b {
        if b.shape() != [c_out] {
            return Err(Error::invalid("conv1d bias shape mismatch"));
        }
    }
    let h = (k - 1) / 2;
    let mut y = Tensor::zeros(&[bn, c_out, t]);
    let xd = x.data();
    let wd = w.data();
    let yd = y.data_mut();
    for bi in 0..bn {
        for co in 0..c_out {
            let out = &mut yd[(bi * c_out + co) * t..][..t];
            if let Some(b) = b {
                let bv = b.data()[co];
                out.iter_mut().for_each(|v| *v = bv);
            }
            for ci in 0..c_in {
                let row = &xd[(bi * c_in + ci) * t..][..t];
                for j in 0..k {
                    let wv = wd[(co * c_in + ci) * k + j];
                    if wv == T::zero() {
                        continue;
                    }
                    // y[t'] += wv * x[t' + j - h] over valid t'
                    let off = j as isize - h as isize;
                    let lo = (-off).max(0) as usize;
                    let hi = ((t as isize - off).min(t as isize)).max(0) as usize;
                    for ti in lo..hi {
                        out[ti] += wv * row[(ti as isize + off) as usize];
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Gradients of [`conv1d`] for (x, w, b). The bias gradient is always
/// returned; discard it for bias-free layers.
pub fn conv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (bn, c_in, t) = x.dims3()?;
    let (c_out, _, k) = w.dims3()?;
    if gy.shape() != [bn, c_out, t] {
        return Err(Error::invalid("conv1d_backward: grad shape mismatch"));
    }
    let h = (k - 1) / 2;
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(&[c_out]);
    let xd = x.data();
    let wd = w.data();
    let gyd = gy.data();
    {
        let gxd = gx.data_mut();
        for bi in 0..bn {
            for co in 0..c_out {
                let grow = &gyd[(bi * c_out + co) * t..][..t];
                for ci in 0..c_in {
                    let gxrow = &mut gxd[(bi * c_in + ci) * t..][..t];
                    for j in 0..k {
                        let wv = wd[(co * c_in + ci) * k + j];
                        if wv == T::zero() {
                            continue;
                        }
                        // gx[s] += gy[s - (j - h)] * w[j]
                        let off = h as isize - j as isize;
                        let lo = (-off).max(0) as usize;
                        let hi = ((t as isize - off).min(t as isize)).max(0) as usize;
                        for s in lo..hi {
                            gxrow[s] += wv * grow[(s as isize + off) as usize];
                        }
                    }
                }
            }
        }
    }
    {
        let gwd = gw.data_mut();
        let gbd = gb.data_mut();
        for bi in 0..bn {
            for co in 0..c_out {
                let grow = &gyd[(bi * c_out + co) * t..][..t];
                let mut bsum = T::zero();
                grow.iter().for_each(|&g| bsum += g);
                gbd[co] += bsum;
                for ci in 0..c_in {
                    let row = &xd[(bi * c_in + ci) * t..][..t];
                    for j in 0..k {
                        let off = j as isize - h as isize;
                        let lo = (-off).max(0) as usize;
                        let hi = ((t as isize - off).min(t as isize)).max(0) as usize;
                        let mut acc = T::zero();
                        for ti in lo..hi {
                            acc += grow[ti] * row[(ti as isize + off) as usize];
                        }
                        gwd[(co * c_in + ci) * k + j] += acc;
                    }
                }
            }
        }
    }
    Ok((gx, gw, gb))
}

/// Depthwise convolution: each channel convolved with its own k-tap kernel.
/// w has shape (C, 1, k).
pub fn dwconv1d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (bn, c, t) = x.dims3()?;
    let (wc, one, k) = w.dims3()?;
    check_odd_kernel(k)?;
    if wc != c || one != 1 {
        return Err(Error::invalid(format!(
            "dwconv1d weight shape {:?} does not match {c} channels",
            w.shape()
        )));
    }
    if let Some(b) = b {
        if b.shape() != [c] {
            return Err(Error::invalid("dwconv1d bias shape mismatch"));
        }
    }
    let h = (k - 1) / 2;
    let mut y = Tensor::zeros(&[bn, c, t]);
    let xd = x.data();
    let wd = w.data();
    let yd = y.data_mut();
    for bi in 0..bn {
        for ci in 0..c {
            let row = &xd[(bi * c + ci) * t..][..t];
            let out = &mut yd[(bi * c + ci) * t..][..t];
            if let Some(b) = b {
                let bv = b.data()[ci];
                out.iter_mut().for_each(|v| *v = bv);
            }
            for j in 0..k {
                let wv = wd[ci * k + j];
                if wv == T::zero() {
                    continue;
                }
                let off = j as isize - h as isize;
                let lo = (-off).max(0) as usize;
                let hi = ((t as isize - off).min(t as isize)).max(0) as usize;
                for ti in lo..hi {
                    out[ti] += wv * row[(ti as isize + off) as usize];
                }
            }
        }
    }
    Ok(y)
}

pub fn dwconv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (bn, c, t) = x.dims3()?;
    let (_, _, k) = w.dims3()?;
    if gy.shape() != x.shape() {
        return Err(Error::invalid("dwconv1d_backward: grad shape mismatch"));
    }
    let h = (k - 1) / 2;
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(&[c]);
    let xd = x.data();
    let wd = w.data();
    let gyd = gy.data();
    let gxd = gx.data_mut();
    let gwd = gw.data_mut();
    let gbd = gb.data_mut();
    for bi in 0..bn {
        for ci in 0..c {
            let row = &xd[(bi * c + ci) * t..][..t];
            let grow = &gyd[(bi * c + ci) * t..][..t];
            let gxrow = &mut gxd[(bi * c + ci) * t..][..t];
            let mut bsum = T::zero();
            grow.iter().for_each(|&g| bsum += g);
            gbd[ci] += bsum;
            for j in 0..k {
                let wv = wd[ci * k + j];
                let off = j as isize - h as isize;
                let lo = (-off).max(0) as usize;
                let hi = ((t as isize - off).min(t as isize)).max(0) as usize;
                let mut acc = T::zero();
                for ti in lo..hi {
                    let src = (ti as isize + off) as usize;
                    acc += grow[ti] * row[src];
                    gxrow[src] += wv * grow[ti];
                }
                gwd[ci * k + j] += acc;
            }
        }
    }
    Ok((gx, gw, gb))
}

/// Pointwise (1x1) convolution: per-time-step linear map across channels.
/// w has shape (C_out, C_in).
pub fn pwconv1d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (bn, c_in, t) = x.dims3()?;
    let [c_out, wc_in] = w.shape() else {
        return Err(Error::invalid("pwconv1d weight must be rank 2"));
    };
    let (c_out, wc_in) = (*c_out, *wc_in);
    if wc_in != c_in {
        return Err(Error::invalid(format!(
            "pwconv1d weight expects {wc_in} input channels, x has {c_in}"
        )));
    }
    if let Some(b) = b {
        if b.shape() != [c_out] {
            return Err(Error::invalid("pwconv1d bias shape mismatch"));
        }
    }
    let mut y = Tensor::zeros(&[bn, c_out, t]);
    let xd = x.data();
    let wd = w.data();
    let yd = y.data_mut();
    for bi in 0..bn {
        for co in 0..c_out {
            let out = &mut yd[(bi * c_out + co) * t..][..t];
            if let Some(b) = b {
                let bv = b.data()[co];
                out.iter_mut().for_each(|v| *v = bv);
            }
            for ci in 0..c_in {
                let wv = wd[co * c_in + ci];
                if wv == T::zero() {
                    continue;
                }
                let row = &xd[(bi * c_in + ci) * t..][..t];
                for ti in 0..t {
                    out[ti] += wv * row[ti];
                }
            }
        }
    }
    Ok(y)
}

pub fn pwconv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (bn, c_in, t) = x.dims3()?;
    let [c_out, _] = w.shape() else {
        return Err(Error::invalid("pwconv1d weight must be rank 2"));
    };
    let c_out = *c_out;
    if gy.shape() != [bn, c_out, t] {
        return Err(Error::invalid("pwconv1d_backward: grad shape mismatch"));
    }
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(&[c_out]);
    let xd = x.data();
    let wd = w.data();
    let gyd = gy.data();
    let gxd = gx.data_mut();
    let gwd = gw.data_mut();
    let gbd = gb.data_mut();
    for bi in 0..bn {
        for co in 0..c_out {
            let grow = &gyd[(bi * c_out + co) * t..][..t];
            let mut bsum = T::zero();
            grow.iter().for_each(|&g| bsum += g);
            gbd[co] += bsum;
            for ci in 0..c_in {
                let row = &xd[(bi * c_in + ci) * t..][..t];
                let gxrow = &mut gxd[(bi * c_in + ci) * t..][..t];
                let wv = wd[co * c_in + ci];
                let mut acc = T::zero();
                for ti in 0..t {
                    acc += grow[ti] * row[ti];
                    gxrow[ti] += wv * grow[ti];
                }
                gwd[co * c_in + ci] += acc;
            }
        }
    }
    Ok((gx, gw, gb))
}

/// Global Response Normalization (ConvNeXtV2 form, 1-d):
/// g_c = ||x_c||_2 over time, n_c = g_c / (mean_c g + eps),
/// y_c = gamma_c * (x_c * n_c) + beta_c + x_c.
pub fn grn<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let (bn, c, t) = x.dims3()?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::invalid("grn gamma/beta must have one value per channel"));
    }
    if eps < 0.0 {
        return Err(Error::invalid("grn eps must be non-negative"));
    }
    let mut y = Tensor::zeros(x.shape());
    let xd = x.data();
    let yd = y.data_mut();
    for bi in 0..bn {
        let norms: Vec<f64> = (0..c)
            .map(|ci| {
                xd[(bi * c + ci) * t..][..t]
                    .iter()
                    .map(|v| v.into_f64() * v.into_f64())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let mu = norms.iter().sum::<f64>() / c as f64;
        for ci in 0..c {
            let n = T::of(norms[ci] / (mu + eps));
            let ga = gamma.data()[ci];
            let be = beta.data()[ci];
            let row = &xd[(bi * c + ci) * t..][..t];
            let out = &mut yd[(bi * c + ci) * t..][..t];
            for ti in 0..t {
                out[ti] = ga * (row[ti] * n) + be + row[ti];
            }
        }
    }
    Ok(y)
}

pub fn grn_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
    gy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (bn, c, t) = x.dims3()?;
    if gy.shape() != x.shape() {
        return Err(Error::invalid("grn_backward: grad shape mismatch"));
    }
    let _ = beta;
    let mut gx = Tensor::zeros(x.shape());
    let mut ggamma = Tensor::zeros(&[c]);
    let mut gbeta = Tensor::zeros(&[c]);
    let xd = x.data();
    let gyd = gy.data();
    let gxd = gx.data_mut();
    for bi in 0..bn {
        let norms: Vec<f64> = (0..c)
            .map(|ci| {
                xd[(bi * c + ci) * t..][..t]
                    .iter()
                    .map(|v| v.into_f64() * v.into_f64())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let mu = norms.iter().sum::<f64>() / c as f64;
        let denom = mu + eps;
        // q_c = sum_t gy * gamma_c * x  (gradient wrt n_c)
        let mut q = vec![0.0f64; c];
        for ci in 0..c {
            let ga = gamma.data()[ci].into_f64();
            let row = &xd[(bi * c + ci) * t..][..t];
            let grow = &gyd[(bi * c + ci) * t..][..t];
            let mut acc = 0.0;
            let mut gga = 0.0;
            let mut gbe = 0.0;
            let n = norms[ci] / denom;
            for ti in 0..t {
                let g = grow[ti].into_f64();
                acc += g * row[ti].into_f64();
                gga += g * row[ti].into_f64() * n;
                gbe += g;
            }
            q[ci] = acc * ga;
            ggamma.data_mut()[ci] += T::of(gga);
            gbeta.data_mut()[ci] += T::of(gbe);
        }
        let qg: f64 = q.iter().zip(&norms).map(|(&a, &b)| a * b).sum();
        for ci in 0..c {
            // dL/dg_c through all n channels
            let dg = q[ci] / denom - qg / (denom * denom * c as f64);
            let n = T::of(norms[ci] / denom);
            let ga = gamma.data()[ci];
            let scale = if norms[ci] > 0.0 {
                dg / norms[ci]
            } else {
                0.0
            };
            let row = &xd[(bi * c + ci) * t..][..t];
            let grow = &gyd[(bi * c + ci) * t..][..t];
            let out = &mut gxd[(bi * c + ci) * t..][..t];
            let scale_t = T::of(scale);
            for ti in 0..t {
                out[ti] = grow[ti] * (ga * n + T::one()) + scale_t * row[ti];
            }
        }
    }
    Ok((gx, ggamma, gbeta))
}

/// Exact (Gaussian-CDF) GELU.
pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| {
        let xf = v.into_f64();
        T::of(xf * normal_cdf(xf))
    })
}

pub fn gelu_backward<T: Scalar>(x: &Tensor<T>, gy: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != gy.shape() {
        return Err(Error::invalid("gelu_backward: grad shape mismatch"));
    }
    let mut gx = Tensor::zeros(x.shape());
    for ((g, &xv), &gyv) in gx.data_mut().iter_mut().zip(x.data()).zip(gy.data()) {
        let xf = xv.into_f64();
        let d = normal_cdf(xf) + xf * normal_pdf(xf);
        *g = T::of(gyv.into_f64() * d);
    }
    Ok(gx)
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// One-sided FFT along the time axis: (B, C, T) -> (B, C, T/2 + 1).
pub fn rfft_time<T: Scalar>(x: &Tensor<T>) -> Result<CTensor<T>> {
    let (bn, c, t) = x.dims3()?;
    if !fft::is_power_of_two(t) {
        return Err(Error::invalid(format!(
            "rfft_time needs a power-of-two length, got {t}"
        )));
    }
    let bins = t / 2 + 1;
    let mut out = CTensor::zeros(&[bn, c, bins]);
    for bi in 0..bn {
        for ci in 0..c {
            let row = &x.data()[(bi * c + ci) * t..][..t];
            let spec = fft::rfft(row)?;
            out.data_mut()[(bi * c + ci) * bins..][..bins].copy_from_slice(&spec);
        }
    }
    Ok(out)
}

/// Adjoint of [`rfft_time`]: maps a one-sided spectrum gradient back to the
/// time domain.
pub fn rfft_time_backward<T: Scalar>(gy: &CTensor<T>, t: usize) -> Result<Tensor<T>> {
    let (bn, c, bins) = gy.dims3()?;
    if bins != t / 2 + 1 {
        return Err(Error::invalid("rfft_time_backward: bin count mismatch"));
    }
    let mut gx = Tensor::zeros(&[bn, c, t]);
    let scale = T::of(t as f64);
    for bi in 0..bn {
        for ci in 0..c {
            let grow = &gy.data()[(bi * c + ci) * bins..][..bins];
            let mut buf = vec![Complex::new(T::zero(), T::zero()); t];
            buf[..bins].copy_from_slice(grow);
            fft::fft_inplace(&mut buf, true)?;
            let out = &mut gx.data_mut()[(bi * c + ci) * t..][..t];
            for (o, v) in out.iter_mut().zip(&buf) {
                *o = v.re * scale;
            }
        }
    }
    Ok(gx)
}

/// Inverse one-sided FFT along time: (B, C, T/2 + 1) -> (B, C, T). Imaginary
/// parts of the DC and Nyquist bins are ignored.
pub fn irfft_time<T: Scalar>(spec: &CTensor<T>, t: usize) -> Result<Tensor<T>> {
    let (bn, c, bins) = spec.dims3()?;
    if bins != t / 2 + 1 {
        return Err(Error::invalid("irfft_time: bin count mismatch"));
    }
    let mut out = Tensor::zeros(&[bn, c, t]);
    for bi in 0..bn {
        for ci in 0..c {
            let row = &spec.data()[(bi * c + ci) * bins..][..bins];
            let time = fft::irfft(row, t)?;
            out.data_mut()[(bi * c + ci) * t..][..t].copy_from_slice(&time);
        }
    }
    Ok(out)
}

/// Adjoint of [`irfft_time`].
pub fn irfft_time_backward<T: Scalar>(gy: &Tensor<T>) -> Result<CTensor<T>> {
    let (bn, c, t) = gy.dims3()?;
    let bins = t / 2 + 1;
    let mut g = CTensor::zeros(&[bn, c, bins]);
    let inv_t = 1.0 / t as f64;
    for bi in 0..bn {
        for ci in 0..c {
            let grow = &gy.data()[(bi * c + ci) * t..][..t];
            let spec = fft::rfft(grow)?;
            let out = &mut g.data_mut()[(bi * c + ci) * bins..][..bins];
            for (k, (o, v)) in out.iter_mut().zip(&spec).enumerate() {
                let edge = k == 0 || k == bins - 1;
                let ck = if edge { inv_t } else { 2.0 * inv_t };
                let scale = T::of(ck);
                *o = Complex::new(
                    v.re * scale,
                    if edge { T::zero() } else { v.im * scale },
                );
            }
        }
    }
    Ok(g)
}

/// Fixed random-Fourier features of the noise-level scalar:
/// [cos(2 pi f_j c), ..., sin(2 pi f_j c), ...]. The frequencies are drawn
/// once at model build and stored as constants.
pub fn sigma_embedding<T: Scalar>(c_noise: f64, freqs: &[f64]) -> Tensor<T> {
    let mut data = Vec::with_capacity(freqs.len() * 2);
    for &f in freqs {
        data.push(T::of((2.0 * std::f64::consts::PI * f * c_noise).cos()));
    }
    for &f in freqs {
        data.push(T::of((2.0 * std::f64::consts::PI * f * c_noise).sin()));
    }
    Tensor::from_vec(&[freqs.len() * 2], data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff, max_rel_error};
    use crate::rng::Prng;

    const FD_STEP: f64 = 1e-5;

    fn random_tensor(shape: &[usize], stream: u64) -> Tensor<f64> {
        let p = Prng::new(314);
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|i| p.normal(stream, i as u64)).collect()).unwrap()
    }

    /// FD-check gradients of sum(f(x) .* weights) wrt x for a generic op.
    fn check_input_grad(
        forward: impl Fn(&Tensor<f64>) -> Tensor<f64>,
        backward: impl Fn(&Tensor<f64>, &Tensor<f64>) -> Tensor<f64>,
        x: &Tensor<f64>,
        tol: f64,
    ) {
        let mix = random_tensor(&[forward(x).numel()], 99);
        let loss = |flat: &[f64]| {
            let t = Tensor::from_vec(x.shape(), flat.to_vec()).unwrap();
            forward(&t)
                .data()
                .iter()
                .zip(mix.data())
                .map(|(&a, &b)| a * b)
                .sum::<f64>()
        };
        let y = forward(x);
        let gy = Tensor::from_vec(y.shape(), mix.data().to_vec()).unwrap();
        let analytic = backward(x, &gy);
        let numeric = central_diff(loss, x.data(), FD_STEP);
        let err = max_rel_error(analytic.data(), &numeric);
        assert!(err <= tol, "input gradient rel error {err} > {tol}");
    }

    #[test]
    fn conv1d_identity_with_unit_k1_kernel() {
        let x = random_tensor(&[2, 3, 8], 1);
        // k = 1 identity-permutation weight
        let mut w = Tensor::zeros(&[3, 3, 1]);
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        let y = conv1d(&x, &w, None).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv1d_hand_derived_edge_case() {
        // x = [1, 2, 3], w = [1, 0, -1]: y[t] = x[t-1] - x[t+1] with zero pads
        let x = Tensor::from_vec(&[1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 3], vec![1.0, 0.0, -1.0]).unwrap();
        let y = conv1d(&x, &w, None).unwrap();
        assert_eq!(y.data(), &[-2.0, -2.0, 2.0]);
    }

    #[test]
    fn conv1d_gradients_match_finite_differences() {
        let x = random_tensor(&[2, 3, 8], 2);
        let w = random_tensor(&[4, 3, 3], 3);
        let b = random_tensor(&[4], 4);
        check_input_grad(
            |x| conv1d(x, &w, Some(&b)).unwrap(),
            |x, gy| conv1d_backward(x, &w, gy).unwrap().0,
            &x,
            1e-6,
        );
        // weight + bias gradients
        let mix = random_tensor(&[conv1d(&x, &w, Some(&b)).unwrap().numel()], 98);
        let loss_w = |flat: &[f64]| {
            let wt = Tensor::from_vec(w.shape(), flat.to_vec()).unwrap();
            conv1d(&x, &wt, Some(&b))
                .unwrap()
                .data()
                .iter()
                .zip(mix.data())
                .map(|(&a, &c)| a * c)
                .sum::<f64>()
        };
        let gy = Tensor::from_vec(&[2, 4, 8], mix.data().to_vec()).unwrap();
        let (_, gw, gb) = conv1d_backward(&x, &w, &gy).unwrap();
        let num_w = central_diff(loss_w, w.data(), FD_STEP);
        assert!(max_rel_error(gw.data(), &num_w) <= 1e-6);
        let loss_b = |flat: &[f64]| {
            let bt = Tensor::from_vec(b.shape(), flat.to_vec()).unwrap();
            conv1d(&x, &w, Some(&bt))
                .unwrap()
                .data()
                .iter()
                .zip(mix.data())
                .map(|(&a, &c)| a * c)
                .sum::<f64>()
        };
        let num_b = central_diff(loss_b, b.data(), FD_STEP);
        assert!(max_rel_error(gb.data(), &num_b) <= 1e-6);
    }

    #[test]
    fn dwconv_impulse_is_identity() {
        let x = random_tensor(&[1, 4, 10], 5);
        let mut w = Tensor::zeros(&[4, 1, 5]);
        for c in 0..4 {
            w.data_mut()[c * 5 + 2] = 1.0; // center tap
        }
        let y = dwconv1d(&x, &w, None).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn dwconv_equals_block_diagonal_conv() {
        let x = random_tensor(&[2, 4, 12], 6);
        let w = random_tensor(&[4, 1, 3], 7);
        let b = random_tensor(&[4], 8);
        let dw = dwconv1d(&x, &w, Some(&b)).unwrap();
        // materialize as a dense conv with per-channel blocks
        let mut dense = Tensor::zeros(&[4, 4, 3]);
        for c in 0..4 {
            for j in 0..3 {
                dense.data_mut()[(c * 4 + c) * 3 + j] = w.data()[c * 3 + j];
            }
        }
        let full = conv1d(&x, &dense, Some(&b)).unwrap();
        for (a, b) in dw.data().iter().zip(full.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dwconv_gradients_match_finite_differences() {
        let x = random_tensor(&[2, 3, 9], 9);
        let w = random_tensor(&[3, 1, 5], 10);
        check_input_grad(
            |x| dwconv1d(x, &w, None).unwrap(),
            |x, gy| dwconv1d_backward(x, &w, gy).unwrap().0,
            &x,
            1e-6,
        );
        let mix = random_tensor(&[x.numel()], 97);
        let gy = Tensor::from_vec(x.shape(), mix.data().to_vec()).unwrap();
        let (_, gw, _) = dwconv1d_backward(&x, &w, &gy).unwrap();
        let loss_w = |flat: &[f64]| {
            let wt = Tensor::from_vec(w.shape(), flat.to_vec()).unwrap();
            dwconv1d(&x, &wt, None)
                .unwrap()
                .data()
                .iter()
                .zip(mix.data())
                .map(|(&a, &c)| a * c)
                .sum::<f64>()
        };
        let num_w = central_diff(loss_w, w.data(), FD_STEP);
        assert!(max_rel_error(gw.data(), &num_w) <= 1e-6);
    }

    #[test]
    fn pwconv_identity_and_equivalence_with_conv_k1() {
        let x = random_tensor(&[2, 3, 7], 11);
        let mut eye = Tensor::zeros(&[3, 3]);
        for c in 0..3 {
            eye.data_mut()[c * 3 + c] = 1.0;
        }
        assert_eq!(pwconv1d(&x, &eye, None).unwrap().data(), x.data());

        let w = random_tensor(&[5, 3], 12);
        let b = random_tensor(&[5], 13);
        let pw = pwconv1d(&x, &w, Some(&b)).unwrap();
        let w3 = Tensor::from_vec(&[5, 3, 1], w.data().to_vec()).unwrap();
        let full = conv1d(&x, &w3, Some(&b)).unwrap();
        for (a, b) in pw.data().iter().zip(full.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pwconv_gradients_match_finite_differences() {
        let x = random_tensor(&[2, 4, 6], 14);
        let w = random_tensor(&[3, 4], 15);
        check_input_grad(
            |x| pwconv1d(x, &w, None).unwrap(),
            |x, gy| pwconv1d_backward(x, &w, gy).unwrap().0,
            &x,
            1e-6,
        );
    }

    #[test]
    fn grn_gamma_zero_is_identity() {
        let x = random_tensor(&[2, 4, 8], 16);
        let gamma = Tensor::zeros(&[4]);
        let beta = Tensor::zeros(&[4]);
        let y = grn(&x, &gamma, &beta, 1e-6).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn grn_single_channel_doubles() {
        let x = random_tensor(&[1, 1, 16], 17);
        let gamma = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let beta = Tensor::zeros(&[1]);
        let y = grn(&x, &gamma, &beta, 0.0).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn grn_gradients_match_finite_differences() {
        let x = random_tensor(&[2, 4, 8], 18);
        let gamma = random_tensor(&[4], 19);
        let beta = random_tensor(&[4], 20);
        let eps = 1e-6;
        check_input_grad(
            |x| grn(x, &gamma, &beta, eps).unwrap(),
            |x, gy| grn_backward(x, &gamma, &beta, eps, gy).unwrap().0,
            &x,
            1e-6,
        );
        let mix = random_tensor(&[x.numel()], 96);
        let gy = Tensor::from_vec(x.shape(), mix.data().to_vec()).unwrap();
        let (_, gg, gb) = grn_backward(&x, &gamma, &beta, eps, &gy).unwrap();
        let loss_g = |flat: &[f64]| {
            let gt = Tensor::from_vec(&[4], flat.to_vec()).unwrap();
            grn(&x, &gt, &beta, eps)
                .unwrap()
                .data()
                .iter()
                .zip(mix.data())
                .map(|(&a, &c)| a * c)
                .sum::<f64>()
        };
        assert!(max_rel_error(gg.data(), &central_diff(loss_g, gamma.data(), FD_STEP)) <= 1e-6);
        let loss_b = |flat: &[f64]| {
            let bt = Tensor::from_vec(&[4], flat.to_vec()).unwrap();
            grn(&x, &gamma, &bt, eps)
                .unwrap()
                .data()
                .iter()
                .zip(mix.data())
                .map(|(&a, &c)| a * c)
                .sum::<f64>()
        };
        assert!(max_rel_error(gb.data(), &central_diff(loss_b, beta.data(), FD_STEP)) <= 1e-6);
    }

    #[test]
    fn gelu_zero_and_cdf_identity() {
        let x = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        assert_eq!(gelu(&x).data()[0], 0.0);
        let xs = random_tensor(&[64], 21);
        let y = gelu(&xs);
        for (&v, &g) in xs.data().iter().zip(y.data()) {
            assert!((g - v * normal_cdf(v)).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_gradient_matches_finite_differences() {
        let x = random_tensor(&[1, 2, 16], 22);
        check_input_grad(
            |x| gelu(x),
            |x, gy| gelu_backward(x, gy).unwrap(),
            &x,
            1e-7,
        );
    }

    #[test]
    fn rfft_round_trip_and_zero() {
        let zero = Tensor::<f64>::zeros(&[1, 2, 16]);
        let spec = rfft_time(&zero).unwrap();
        assert!(spec.data().iter().all(|c| c.re == 0.0 && c.im == 0.0));

        let x = random_tensor(&[1, 2, 16], 23);
        let spec = rfft_time(&x).unwrap();
        assert_eq!(spec.shape(), &[1, 2, 9]);
        let back = irfft_time(&spec, 16).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rfft_parseval_along_time() {
        let x = random_tensor(&[1, 1, 64], 24);
        let spec = rfft_time(&x).unwrap();
        let time_energy: f64 = x.data().iter().map(|v| v * v).sum();
        let d = spec.data();
        let mut freq_energy = d[0].norm_sqr() + d[32].norm_sqr();
        for v in &d[1..32] {
            freq_energy += 2.0 * v.norm_sqr();
        }
        freq_energy /= 64.0;
        assert!((time_energy - freq_energy).abs() / time_energy < 1e-9);
    }

    #[test]
    fn rfft_backward_matches_finite_differences() {
        let x = random_tensor(&[1, 2, 16], 25);
        let bins = 9;
        let mix_re = random_tensor(&[2 * bins], 26);
        let mix_im = random_tensor(&[2 * bins], 27);
        let loss = |flat: &[f64]| {
            let t = Tensor::from_vec(x.shape(), flat.to_vec()).unwrap();
            let s = rfft_time(&t).unwrap();
            s.data()
                .iter()
                .enumerate()
                .map(|(i, c)| c.re * mix_re.data()[i] + c.im * mix_im.data()[i])
                .sum::<f64>()
        };
        let gy = CTensor::from_vec(
            &[1, 2, bins],
            (0..2 * bins)
                .map(|i| Complex::new(mix_re.data()[i], mix_im.data()[i]))
                .collect(),
        )
        .unwrap();
        let analytic = rfft_time_backward(&gy, 16).unwrap();
        let numeric = central_diff(loss, x.data(), FD_STEP);
        assert!(max_rel_error(analytic.data(), &numeric) <= 1e-6);
    }

    #[test]
    fn irfft_backward_matches_finite_differences() {
        // parameterize the one-sided spectrum by its independent reals
        let t = 16;
        let bins = t / 2 + 1;
        let base = random_tensor(&[2 * bins], 28); // re parts
        let base_im = random_tensor(&[2 * bins], 29);
        let mix = random_tensor(&[t], 30);
        let build = |re: &[f64], im: &[f64]| {
            CTensor::from_vec(
                &[1, 1, bins],
                (0..bins)
                    .map(|i| Complex::new(re[i], im[i]))
                    .collect(),
            )
            .unwrap()
        };
        let loss_re = |flat: &[f64]| {
            let s = build(flat, &base_im.data()[..bins]);
            irfft_time(&s, t)
                .unwrap()
                .data()
                .iter()
                .zip(mix.data())
                .map(|(&a, &b)| a * b)
                .sum::<f64>()
        };
        let gy = Tensor::from_vec(&[1, 1, t], mix.data().to_vec()).unwrap();
        let g = irfft_time_backward(&gy).unwrap();
        let re0: Vec<f64> = base.data()[..bins].to_vec();
        let num_re = central_diff(loss_re, &re0, FD_STEP);
        let ana_re: Vec<f64> = g.data().iter().map(|c| c.re).collect();
        assert!(max_rel_error(&ana_re, &num_re) <= 1e-6);

        let loss_im = |flat: &[f64]| {
            let s = build(&base.data()[..bins], flat);
            irfft_time(&s, t)
                .unwrap()
                .data()
                .iter()
                .zip(mix.data())
                .map(|(&a, &b)| a * b)
                .sum::<f64>()
        };
        let im0: Vec<f64> = base_im.data()[..bins].to_vec();
        let num_im = central_diff(loss_im, &im0, FD_STEP);
        let ana_im: Vec<f64> = g.data().iter().map(|c| c.im).collect();
        assert!(max_rel_error(&ana_im, &num_im) <= 1e-6);
    }

    #[test]
    fn sigma_embedding_bounded_deterministic_lipschitz() {
        let p = Prng::new(55);
        let freqs: Vec<f64> = (0..8).map(|i| p.normal(1, i)).collect();
        let e1: Tensor<f64> = sigma_embedding(0.37, &freqs);
        let e2: Tensor<f64> = sigma_embedding(0.37, &freqs);
        assert_eq!(e1.data(), e2.data());
        assert!(e1.data().iter().all(|v| v.abs() <= 1.0));

        // finite-difference Lipschitz bound: |de/dc| <= 2 pi max|f|
        let bound = 2.0 * std::f64::consts::PI * freqs.iter().fold(0.0f64, |m, f| m.max(f.abs()));
        let h = 1e-6;
        let ep: Tensor<f64> = sigma_embedding(0.37 + h, &freqs);
        for (a, b) in ep.data().iter().zip(e1.data()) {
            assert!(((a - b) / h).abs() <= bound * (1.0 + 1e-6));
        }
    }
}
