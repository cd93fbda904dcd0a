//! Parameter-holding layer structs built on the ops in this module.
//!
//! Each layer accumulates gradients into its tensors' grad buffers during
//! `backward` and reports exact parameter and FLOP counts. FLOP formulas
//! count a multiply-add as 2 operations and exclude the bias add (counted
//! as element-wise work at the network level).

use crate::error::Result;
use crate::rng::{streams, Prng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::ops;

/// Sequential weight-init context: draws are keyed by a single advancing
/// cursor on the init stream so a given (seed, topology) pair always produces
/// the same parameters.
pub struct InitCtx {
    prng: Prng,
    cursor: u64,
}

impl InitCtx {
    pub fn new(seed: u64) -> Self {
        InitCtx {
            prng: Prng::new(seed),
            cursor: 0,
        }
    }

    /// Fan-in-scaled uniform draw in [-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn fan_in_uniform<T: Scalar>(&mut self, fan_in: usize, n: usize) -> Vec<T> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let idx = self.bump();
            out.push(T::of(self.prng.uniform_in(
                streams::WEIGHT_INIT,
                idx,
                -bound,
                bound,
            )));
        }
        out
    }

    pub fn standard_normals(&mut self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let idx = self.bump();
            out.push(self.prng.normal(streams::EMBED_FREQS, idx));
        }
        out
    }

    fn bump(&mut self) -> u64 {
        let c = self.cursor;
        self.cursor += 1;
        c
    }
}

fn param<T: Scalar>(shape: &[usize], data: Vec<T>) -> Tensor<T> {
    let mut t = Tensor::from_vec(shape, data).unwrap();
    t.grad_mut(); // parameters always carry a grad buffer
    t
}

#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub weight: Tensor<T>, // (C_out, C_in, k)
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new(c_in: usize, c_out: usize, k: usize, init: &mut InitCtx) -> Self {
        Conv1d {
            weight: param(&[c_out, c_in, k], init.fan_in_uniform(c_in * k, c_out * c_in * k)),
            bias: Some(param(&[c_out], vec![T::zero(); c_out])),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::conv1d(x, &self.weight, self.bias.as_ref())
    }

    pub fn backward(&mut self, x: &Tensor<T>, gy: &Tensor<T>) -> Result<Tensor<T>> {
        let (gx, gw, gb) = ops::conv1d_backward(x, &self.weight, gy)?;
        accumulate(&mut self.weight, &gw);
        if let Some(b) = self.bias.as_mut() {
            accumulate(b, &gb);
        }
        Ok(gx)
    }

    pub fn param_count(&self) -> usize {
        self.weight.numel() + self.bias.as_ref().map_or(0, Tensor::numel)
    }

    /// 2 * C_in * C_out * k * T
    pub fn flops(&self, t: usize) -> u64 {
        let (c_out, c_in, k) = self.weight.dims3().unwrap();
        2 * (c_in * c_out * k * t) as u64
    }
}

#[derive(Debug, Clone)]
pub struct DwConv1d<T> {
    pub weight: Tensor<T>, // (C, 1, k)
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> DwConv1d<T> {
    pub fn new(c: usize, k: usize, init: &mut InitCtx) -> Self {
        DwConv1d {
            weight: param(&[c, 1, k], init.fan_in_uniform(k, c * k)),
            bias: Some(param(&[c], vec![T::zero(); c])),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::dwconv1d(x, &self.weight, self.bias.as_ref())
    }

    pub fn backward(&mut self, x: &Tensor<T>, gy: &Tensor<T>) -> Result<Tensor<T>> {
        let (gx, gw, gb) = ops::dwconv1d_backward(x, &self.weight, gy)?;
        accumulate(&mut self.weight, &gw);
        if let Some(b) = self.bias.as_mut() {
            accumulate(b, &gb);
        }
        Ok(gx)
    }

    pub fn param_count(&self) -> usize {
        self.weight.numel() + self.bias.as_ref().map_or(0, Tensor::numel)
    }

    /// 2 * C * k * T
    pub fn flops(&self, t: usize) -> u64 {
        let (c, _, k) = self.weight.dims3().unwrap();
        2 * (c * k * t) as u64
    }
}

#[derive(Debug, Clone)]
pub struct PwConv1d<T> {
    pub weight: Tensor<T>, // (C_out, C_in)
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> PwConv1d<T> {
    pub fn new(c_in: usize, c_out: usize, init: &mut InitCtx) -> Self {
        PwConv1d {
            weight: param(&[c_out, c_in], init.fan_in_uniform(c_in, c_out * c_in)),
            bias: Some(param(&[c_out], vec![T::zero(); c_out])),
        }
    }

    pub fn new_zero(c_in: usize, c_out: usize) -> Self {
        PwConv1d {
            weight: param(&[c_out, c_in], vec![T::zero(); c_out * c_in]),
            bias: Some(param(&[c_out], vec![T::zero(); c_out])),
        }
    }

    pub fn new_no_bias(c_in: usize, c_out: usize, init: &mut InitCtx) -> Self {
        PwConv1d {
            weight: param(&[c_out, c_in], init.fan_in_uniform(c_in, c_out * c_in)),
            bias: None,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::pwconv1d(x, &self.weight, self.bias.as_ref())
    }

    pub fn backward(&mut self, x: &Tensor<T>, gy: &Tensor<T>) -> Result<Tensor<T>> {
        let (gx, gw, gb) = ops::pwconv1d_backward(x, &self.weight, gy)?;
        accumulate(&mut self.weight, &gw);
        if let Some(b) = self.bias.as_mut() {
            accumulate(b, &gb);
        }
        Ok(gx)
    }

    pub fn param_count(&self) -> usize {
        self.weight.numel() + self.bias.as_ref().map_or(0, Tensor::numel)
    }

    /// 2 * C_in * C_out * T
    pub fn flops(&self, t: usize) -> u64 {
        2 * (self.weight.numel() * t) as u64
    }
}

#[derive(Debug, Clone)]
pub struct Grn<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub eps: f64,
}

impl<T: Scalar> Grn<T> {
    /// gamma and beta start at zero (identity map), per ConvNeXtV2 practice.
    pub fn new(c: usize, eps: f64) -> Self {
        Grn {
            gamma: param(&[c], vec![T::zero(); c]),
            beta: param(&[c], vec![T::zero(); c]),
            eps,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::grn(x, &self.gamma, &self.beta, self.eps)
    }

    pub fn backward(&mut self, x: &Tensor<T>, gy: &Tensor<T>) -> Result<Tensor<T>> {
        let (gx, gg, gb) = ops::grn_backward(x, &self.gamma, &self.beta, self.eps, gy)?;
        accumulate(&mut self.gamma, &gg);
        accumulate(&mut self.beta, &gb);
        Ok(gx)
    }

    pub fn param_count(&self) -> usize {
        self.gamma.numel() + self.beta.numel()
    }
}

/// Dense map on a vector, used for the noise-level embedding projection.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Tensor<T>, // (out, in)
    pub bias: Tensor<T>,   // (out)
}

impl<T: Scalar> Linear<T> {
    pub fn new(d_in: usize, d_out: usize, init: &mut InitCtx) -> Self {
        Linear {
            weight: param(&[d_out, d_in], init.fan_in_uniform(d_in, d_out * d_in)),
            bias: param(&[d_out], vec![T::zero(); d_out]),
        }
    }

    pub fn forward(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        let [d_out, d_in] = self.weight.shape() else {
            return Err(crate::error::Error::invalid("linear weight must be rank 2"));
        };
        let (d_out, d_in) = (*d_out, *d_in);
        if v.shape() != [d_in] {
            return Err(crate::error::Error::invalid(format!(
                "linear expects input of {d_in}, got {:?}",
                v.shape()
            )));
        }
        let mut out = vec![T::zero(); d_out];
        for (o, slot) in out.iter_mut().enumerate() {
            let mut acc = self.bias.data()[o];
            for i in 0..d_in {
                acc += self.weight.data()[o * d_in + i] * v.data()[i];
            }
            *slot = acc;
        }
        Tensor::from_vec(&[d_out], out)
    }

    /// Accumulates weight/bias grads; returns the input gradient.
    pub fn backward(&mut self, v: &Tensor<T>, gy: &Tensor<T>) -> Result<Tensor<T>> {
        let [d_out, d_in] = self.weight.shape() else {
            unreachable!()
        };
        let (d_out, d_in) = (*d_out, *d_in);
        let mut gv = vec![T::zero(); d_in];
        for o in 0..d_out {
            let g = gy.data()[o];
            for i in 0..d_in {
                gv[i] += g * self.weight.data()[o * d_in + i];
            }
        }
        {
            let gw = self.weight.grad_mut();
            for o in 0..d_out {
                let g = gy.data()[o];
                for i in 0..d_in {
                    gw[o * d_in + i] += g * v.data()[i];
                }
            }
        }
        {
            let gb = self.bias.grad_mut();
            for o in 0..d_out {
                gb[o] += gy.data()[o];
            }
        }
        Tensor::from_vec(&[d_in], gv)
    }

    pub fn param_count(&self) -> usize {
        self.weight.numel() + self.bias.numel()
    }
}

fn accumulate<T: Scalar>(p: &mut Tensor<T>, g: &Tensor<T>) {
    debug_assert_eq!(p.shape(), g.shape());
    for (dst, &src) in p.grad_mut().iter_mut().zip(g.data()) {
        *dst += src;
    }
}
