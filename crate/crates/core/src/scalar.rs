use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Floating-point element type of a [`Tensor`](crate::Tensor).
///
/// Training runs in `f32`; gradient checks run in `f64`.
pub trait Scalar: Float + Sum + Debug + Display + Default + Send + Sync + 'static {
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn as_f32(self) -> f32;
}

impl Scalar for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self as f32
    }
}
