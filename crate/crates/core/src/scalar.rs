//! Floating-point scalar abstraction: the numeric core is generic over f32/f64.
//!
//! The pipeline default is f64 (`crate::Real`); f32 is a storage mode. All
//! precision-critical constants and RNG draws are produced in f64 and rounded
//! once into the target type.

use std::fmt;

/// Scalar type usable for tensors, waveforms and network parameters.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::NumAssign
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Checkpoint dtype code (0 = f32, 1 = f64).
    const DTYPE_CODE: u8;
    /// Bytes per element in the checkpoint payload.
    const BYTE_WIDTH: usize;

    fn of(x: f64) -> Self;
    fn into_f64(self) -> f64;

    /// Gauss error function, evaluated in double precision.
    fn erf(self) -> Self {
        Self::of(libm::erf(self.into_f64()))
    }

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE_CODE: u8 = 0;
    const BYTE_WIDTH: usize = 4;

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Scalar for f64 {
    const DTYPE_CODE: u8 = 1;
    const BYTE_WIDTH: usize = 8;

    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}
