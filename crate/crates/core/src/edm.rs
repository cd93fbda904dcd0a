//! Closed-form diffusion math: preconditioning, loss weighting, noise-level
//! statistics, the rho-warped sigma schedule, and the first-order
//! probability-flow Euler sampler.
//!
//! Sigma-domain scalars are always f64; tensors remain generic over the
//! storage scalar.

use crate::error::{Error, Result};
use crate::model::ConditioningBundle;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_SIGMA_MIN: f64 = 0.002;
pub const DEFAULT_SIGMA_MAX: f64 = 80.0;
pub const DEFAULT_RHO: f64 = 7.0;

/// c_in/c_skip/c_out scalings plus the network's noise-level conditioning
/// scalar c_noise = ln(sigma)/4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreconditionCoeffs {
    pub c_in: f64,
    pub c_skip: f64,
    pub c_out: f64,
    pub c_noise: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// c_in = 1/sqrt(s^2 + d^2), c_skip = d^2/(s^2 + d^2),
/// c_out = s*d/sqrt(s^2 + d^2), c_noise = ln(s)/4.
pub fn precondition_coeffs(sigma: f64, sigma_data: f64) -> Result<PreconditionCoeffs> {
    check_positive("sigma", sigma)?;
    check_positive("sigma_data", sigma_data)?;
    let sum_sq = sigma * sigma + sigma_data * sigma_data;
    Ok(PreconditionCoeffs {
        c_in: 1.0 / sum_sq.sqrt(),
        c_skip: sigma_data * sigma_data / sum_sq,
        c_out: sigma * sigma_data / sum_sq.sqrt(),
        c_noise: sigma.ln() / 4.0,
    })
}

/// Loss weight lambda(sigma) = (sigma^2 + sigma_data^2) / (sigma*sigma_data)^2.
pub fn loss_weight(sigma: f64, sigma_data: f64) -> Result<f64> {
    check_positive("sigma", sigma)?;
    check_positive("sigma_data", sigma_data)?;
    let p = sigma * sigma_data;
    Ok((sigma * sigma + sigma_data * sigma_data) / (p * p))
}

/// Holds sigma_data and evaluates the preconditioning at a given sigma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preconditioner {
    sigma_data: f64,
}

impl Preconditioner {
    pub fn new(sigma_data: f64) -> Result<Self> {
        check_positive("sigma_data", sigma_data)?;
        Ok(Preconditioner { sigma_data })
    }

    pub fn sigma_data(&self) -> f64 {
        self.sigma_data
    }

    pub fn coeffs(&self, sigma: f64) -> Result<PreconditionCoeffs> {
        precondition_coeffs(sigma, self.sigma_data)
    }

    pub fn loss_weight(&self, sigma: f64) -> Result<f64> {
        loss_weight(sigma, self.sigma_data)
    }
}

/// Draw sigma from the training distribution: ln(sigma) ~ N(p_mean, p_std^2).
pub fn sample_sigma(rng: &mut RngStream, p_mean: f64, p_std: f64) -> Result<f64> {
    if !(p_std > 0.0 && p_std.is_finite()) {
        return Err(Error::invalid("p_std must be positive"));
    }
    Ok((p_mean + p_std * rng.next_normal()).exp())
}

/// Dataset-derived constants: pooled sample std, and the mean/std of the
/// per-segment log-std values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub sigma_data: f64,
    pub p_mean: f64,
    pub p_std: f64,
    pub n_segments: usize,
}

impl DatasetStats {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_data > 0.0 && self.sigma_data.is_finite()) {
            return Err(Error::Statistics("sigma_data must be positive".into()));
        }
        if !(self.p_std > 0.0 && self.p_std.is_finite()) {
            return Err(Error::Statistics("p_std must be positive".into()));
        }
        if self.n_segments < 2 {
            return Err(Error::Statistics("need at least 2 segments".into()));
        }
        Ok(())
    }
}

/// Estimate [`DatasetStats`] from waveform segments.
///
/// sigma_data pools every sample (population std); p_mean/p_std are the mean
/// and population std of ln(std(segment)). Zero-variance segments are
/// excluded from the log-std statistics; their indices are returned so the
/// caller can warn. A dataset whose log-std spread is zero (or with fewer
/// than two usable segments) is degenerate and rejected.
pub fn estimate_stats<T: Scalar>(segments: &[&[T]]) -> Result<(DatasetStats, Vec<usize>)> {
    if segments.len() < 2 {
        return Err(Error::invalid("need at least 2 segments"));
    }
    if segments.iter().any(|s| s.len() < 2) {
        return Err(Error::invalid("every segment needs at least 2 samples"));
    }

    let mut pooled_sum = 0.0f64;
    let mut pooled_sq = 0.0f64;
    let mut pooled_n = 0usize;
    let mut log_stds = Vec::with_capacity(segments.len());
    let mut excluded = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        let n = seg.len() as f64;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for v in seg.iter() {
            let x = v.into_f64();
            sum += x;
            sq += x * x;
        }
        pooled_sum += sum;
        pooled_sq += sq;
        pooled_n += seg.len();
        let mean = sum / n;
        let var = (sq / n - mean * mean).max(0.0);
        if var == 0.0 {
            excluded.push(i);
        } else {
            log_stds.push(var.sqrt().ln());
        }
    }

    let mean = pooled_sum / pooled_n as f64;
    let var = (pooled_sq / pooled_n as f64 - mean * mean).max(0.0);
    let sigma_data = var.sqrt();
    if sigma_data == 0.0 {
        return Err(Error::Statistics("all-zero dataset".into()));
    }
    if log_stds.len() < 2 {
        return Err(Error::Statistics(
            "fewer than 2 segments with non-zero variance".into(),
        ));
    }
    let p_mean = log_stds.iter().sum::<f64>() / log_stds.len() as f64;
    let p_var =
        log_stds.iter().map(|v| (v - p_mean) * (v - p_mean)).sum::<f64>() / log_stds.len() as f64;
    let p_std = p_var.sqrt();
    let stats = DatasetStats {
        sigma_data,
        p_mean,
        p_std,
        n_segments: log_stds.len(),
    };
    if p_std == 0.0 {
        return Err(Error::Statistics(
            "degenerate dataset: zero spread of per-segment log-std".into(),
        ));
    }
    stats.validate()?;
    Ok((stats, excluded))
}

/// Discrete noise levels sigma_0 = sigma_max > ... > sigma_{n-1} = sigma_min,
/// warped by rho.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub values: Vec<f64>,
}

/// sigma_i = (max^(1/rho) + i/(n-1) * (min^(1/rho) - max^(1/rho)))^rho.
pub fn build_schedule(sigma_min: f64, sigma_max: f64, rho: f64, n: usize) -> Result<SigmaSchedule> {
    check_positive("sigma_min", sigma_min)?;
    check_positive("sigma_max", sigma_max)?;
    check_positive("rho", rho)?;
    if sigma_min >= sigma_max {
        return Err(Error::invalid("need sigma_min < sigma_max"));
    }
    if n < 2 {
        return Err(Error::invalid("schedule needs n >= 2 levels"));
    }
    let a = sigma_max.powf(1.0 / rho);
    let b = sigma_min.powf(1.0 / rho);
    let values = (0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            (a + f * (b - a)).powf(rho)
        })
        .collect();
    Ok(SigmaSchedule {
        sigma_min,
        sigma_max,
        rho,
        values,
    })
}

impl SigmaSchedule {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Anything that maps (noisy signal, sigma, conditioning) to a denoised
/// signal of the same shape.
pub trait Denoiser<T: Scalar> {
    fn denoise(&self, x: &Tensor<T>, sigma: f64, cond: &ConditioningBundle<T>) -> Result<Tensor<T>>;
}

/// D(x; sigma) = c_skip * x + c_out * F(c_in * x, c_noise, cond).
pub fn apply_denoiser<T: Scalar>(
    net: &crate::model::DenoiserNet<T>,
    x: &Tensor<T>,
    sigma: f64,
    cond: &ConditioningBundle<T>,
    pre: &Preconditioner,
) -> Result<Tensor<T>> {
    if !x.all_finite() {
        return Err(Error::Validation("non-finite values in denoiser input".into()));
    }
    let c = pre.coeffs(sigma)?;
    let x_in = x.scale(T::of(c.c_in));
    let f = net.infer(&x_in, c.c_noise, cond)?;
    if f.shape() != x.shape() {
        return Err(Error::Internal(format!(
            "network changed shape: {:?} -> {:?}",
            x.shape(),
            f.shape()
        )));
    }
    let mut out = x.scale(T::of(c.c_skip));
    let c_out = T::of(c.c_out);
    for (o, &fv) in out.data_mut().iter_mut().zip(f.data()) {
        *o += c_out * fv;
    }
    Ok(out)
}

/// The trained network seen through its preconditioning wrapper.
pub struct PreconditionedNet<'a, T> {
    pub net: &'a crate::model::DenoiserNet<T>,
    pub pre: Preconditioner,
}

impl<T: Scalar> Denoiser<T> for PreconditionedNet<'_, T> {
    fn denoise(&self, x: &Tensor<T>, sigma: f64, cond: &ConditioningBundle<T>) -> Result<Tensor<T>> {
        apply_denoiser(self.net, x, sigma, cond, &self.pre)
    }
}

/// Score estimate: grad_x log p(x; sigma) = (d - x) / sigma^2.
pub fn score<T: Scalar>(x: &Tensor<T>, sigma: f64, d: &Tensor<T>) -> Result<Tensor<T>> {
    check_positive("sigma", sigma)?;
    if x.shape() != d.shape() {
        return Err(Error::invalid("score: shape mismatch"));
    }
    let inv = T::of(1.0 / (sigma * sigma));
    Ok(d.sub(x)?.scale(inv))
}

/// Weighted L2 denoising loss of one segment at one noise level; gradients
/// are accumulated into the network (scaled by `grad_scale`, the caller's
/// batch-average factor).
///
/// Loss = lambda(sigma) * mean((D(x + n; sigma) - x)^2), n ~ N(0, sigma^2 I)
/// drawn from `rng`.
pub fn denoising_loss<T: Scalar>(
    net: &mut crate::model::DenoiserNet<T>,
    pre: &Preconditioner,
    x_clean: &Tensor<T>,
    cond: &ConditioningBundle<T>,
    sigma: f64,
    rng: &mut RngStream,
    grad_scale: f64,
) -> Result<f64> {
    let c = pre.coeffs(sigma)?;
    let lambda = pre.loss_weight(sigma)?;
    let n_elems = x_clean.numel();

    let mut x_noisy = x_clean.clone();
    for v in x_noisy.data_mut() {
        *v += T::of(sigma * rng.next_normal());
    }

    let x_in = x_noisy.scale(T::of(c.c_in));
    let (f, mut cache) = net.forward(&x_in, c.c_noise, cond)?;

    // D = c_skip * x_noisy + c_out * f; e = D - x_clean
    let mut residual = Tensor::zeros(x_clean.shape());
    let c_skip = T::of(c.c_skip);
    let c_out = T::of(c.c_out);
    let mut loss_acc = 0.0f64;
    for i in 0..n_elems {
        let d = c_skip * x_noisy.data()[i] + c_out * f.data()[i];
        let e = d - x_clean.data()[i];
        loss_acc += e.into_f64() * e.into_f64();
        residual.data_mut()[i] = e;
    }
    let loss = lambda * loss_acc / n_elems as f64;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!(
            "denoising loss is not finite at sigma {sigma}"
        )));
    }

    // dL/dF = grad_scale * lambda * 2/N * e * c_out, through x_in only via F.
    let scale = T::of(grad_scale * lambda * 2.0 / n_elems as f64 * c.c_out);
    let g_f = residual.scale(scale);
    net.backward(&mut cache, &g_f)?;
    Ok(loss)
}

/// Closed-form expectation of [`denoising_loss`] for the zero network
/// (D = c_skip * (x + n)); used by tests and the training-start check.
pub fn zero_net_expected_loss(sigma: f64, sigma_data: f64, mean_sq_clean: f64) -> Result<f64> {
    let c = precondition_coeffs(sigma, sigma_data)?;
    let lambda = loss_weight(sigma, sigma_data)?;
    let a = c.c_skip - 1.0;
    Ok(lambda * (a * a * mean_sq_clean + c.c_skip * c.c_skip * sigma * sigma))
}

/// First-order probability-flow sampler (Euler).
///
/// Starts from x ~ N(0, sigma_max^2 I), steps down the schedule with
/// x_next = x + (s_next - s_cur) * (x - D(x; s_cur)) / s_cur,
/// and finishes with one step to sigma = 0 (equivalent to returning
/// D(x; sigma_min)). Model calls: one per schedule level, including the
/// final denoise.
pub fn euler_sample<T: Scalar, D: Denoiser<T>>(
    model: &D,
    cond: &ConditioningBundle<T>,
    schedule: &SigmaSchedule,
    rng: &mut RngStream,
    length: usize,
) -> Result<Tensor<T>> {
    if schedule.len() < 2 {
        return Err(Error::invalid("schedule needs at least 2 levels"));
    }
    let mut x = Tensor::zeros(&[1, 1, length]);
    let sigma_max = schedule.values[0];
    for v in x.data_mut() {
        *v = T::of(sigma_max * rng.next_normal());
    }

    for w in schedule.values.windows(2) {
        let (s_cur, s_next) = (w[0], w[1]);
        x = euler_step(model, &x, s_cur, s_next, cond)?;
    }
    // final step to sigma = 0
    let s_last = *schedule.values.last().unwrap();
    euler_step(model, &x, s_last, 0.0, cond)
}

fn euler_step<T: Scalar, D: Denoiser<T>>(
    model: &D,
    x: &Tensor<T>,
    s_cur: f64,
    s_next: f64,
    cond: &ConditioningBundle<T>,
) -> Result<Tensor<T>> {
    let d = model.denoise(x, s_cur, cond)?;
    if d.shape() != x.shape() {
        return Err(Error::Internal("denoiser changed the sample shape".into()));
    }
    let step = T::of((s_next - s_cur) / s_cur);
    let mut out = x.clone();
    for ((o, &xv), &dv) in out.data_mut().iter_mut().zip(x.data()).zip(d.data()) {
        *o = xv + step * (xv - dv);
    }
    Ok(out)
}
