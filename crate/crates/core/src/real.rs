//! Scalar abstraction so the same kernels run in 32-bit (training) and
//! 64-bit (oracles, gradient checks).

use core::fmt::{Debug, Display};
use core::iter::Sum;
use num_traits::Float;

pub trait Real: Float + Default + Debug + Display + Sum + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    #[inline]
    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
