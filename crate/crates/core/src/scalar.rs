//! Generic scalar abstraction for the numeric core.
//!
//! Everything that touches sample or parameter payloads is generic over
//! [`Scalar`] so the same kernels run at f32 (the on-disk payload type) and
//! f64 (used by gradient checks and high-precision tests). Derived
//! quantities that the contracts pin to 64-bit precision (index values,
//! inertias, p-values) are always accumulated and returned as `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable as a tensor payload.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from f64 (rounds to nearest representable value).
    fn from_f64_lossy(value: f64) -> Self;

    /// Widening conversion to f64.
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64_lossy(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64_lossy(value: f64) -> Self {
        value
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
