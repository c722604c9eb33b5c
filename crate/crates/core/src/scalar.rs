//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Lossy for `f32`.
    fn lit(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    /// `n` as a scalar.
    fn of_usize(n: usize) -> Self {
        Self::lit(n as f64)
    }

    /// Tolerance that scales with machine precision: `1e4 * eps`.
    fn tiny() -> Self {
        Self::epsilon() * Self::lit(1.0e4)
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn dist_euclid<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}
