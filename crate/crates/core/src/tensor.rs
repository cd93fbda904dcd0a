//! Dense n-dimensional tensors with an optional gradient buffer.
//!
//! Feature maps use the (batch, channels, time) layout, row-major and
//! contiguous. Gradients are plain same-shape buffers filled by the
//! hand-written backward passes in `nn`.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!(
                "shape {:?} needs {n} elements, got {}",
                shape,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    /// 1-element-channel waveform tensor (1, 1, n).
    pub fn from_samples(samples: &[T]) -> Self {
        Tensor {
            shape: vec![1, 1, samples.len()],
            data: samples.to_vec(),
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    /// Dimensions of a (batch, channels, time) feature map.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [b, c, t] => Ok((b, c, t)),
            _ => Err(Error::invalid(format!(
                "expected rank-3 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn scale(&self, s: T) -> Tensor<T> {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        if self.shape != other.shape {
            return Err(Error::invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            grad: None,
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean of squared elements, accumulated in f64.
    pub fn mean_sq(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let s: f64 = self.data.iter().map(|v| v.into_f64() * v.into_f64()).sum();
        s / self.data.len() as f64
    }
}

/// Complex-valued tensor for the spectral branch; no gradient buffer, complex
/// gradients travel as separate `CTensor` values.
#[derive(Debug, Clone, PartialEq)]
pub struct CTensor<T> {
    shape: Vec<usize>,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> CTensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        CTensor {
            shape: shape.to_vec(),
            data: vec![Complex::new(T::zero(), T::zero()); n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<Complex<T>>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!(
                "shape {:?} needs {n} elements, got {}",
                shape,
                data.len()
            )));
        }
        Ok(CTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [b, c, t] => Ok((b, c, t)),
            _ => Err(Error::invalid(format!(
                "expected rank-3 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Split into real and imaginary part tensors of the same shape.
    pub fn split_re_im(&self) -> (Tensor<T>, Tensor<T>) {
        let re = self.data.iter().map(|c| c.re).collect();
        let im = self.data.iter().map(|c| c.im).collect();
        (
            Tensor::from_vec(&self.shape, re).unwrap(),
            Tensor::from_vec(&self.shape, im).unwrap(),
        )
    }

    pub fn from_re_im(re: &Tensor<T>, im: &Tensor<T>) -> Result<CTensor<T>> {
        if re.shape() != im.shape() {
            return Err(Error::invalid("re/im shape mismatch".to_string()));
        }
        Ok(CTensor {
            shape: re.shape().to_vec(),
            data: re
                .data()
                .iter()
                .zip(im.data())
                .map(|(&r, &i)| Complex::new(r, i))
                .collect(),
        })
    }
}
