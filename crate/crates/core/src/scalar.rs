//! Scalar abstraction shared by the geometric code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar used by geometry, alignment, cameras and shading: f32 or f64.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Exact for f64, correctly rounded for f32.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Minimum hit distance for rays at this precision.
    fn geometric_epsilon() -> Self;

    /// Distance secondary rays are pushed off a surface before tracing (meters).
    fn ray_offset() -> Self;
}

impl Real for f32 {
    fn geometric_epsilon() -> Self {
        1e-5
    }

    fn ray_offset() -> Self {
        1e-3
    }
}

impl Real for f64 {
    fn geometric_epsilon() -> Self {
        1e-9
    }

    fn ray_offset() -> Self {
        1e-6
    }
}

/// Exact-arithmetic friendly scalar used by metric ratios. Every [`Real`] qualifies,
/// and so do rational types such as `num_rational::Ratio<i64>`.
pub trait Ratio:
    num_traits::Num + FromPrimitive + Copy + PartialOrd + Debug + Send + Sync + 'static
{
    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }

    #[inline]
    fn quotient(num: u64, den: u64) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }
}

impl<T> Ratio for T where
    T: num_traits::Num + FromPrimitive + Copy + PartialOrd + Debug + Send + Sync + 'static
{
}
