//! Scalar abstraction for the person-fit math.

use std::fmt::{Debug, Display};

/// Floating-point scalar the statistics are computed in: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::iter::Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts a count or index into the scalar type.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable as float")
    }

    /// Converts an `f64` constant into the scalar type.
    #[inline]
    fn of_f64(x: f64) -> Self {
        Self::from_f64(x).expect("f64 representable as float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Natural-log odds `ln(p / (1 - p))`.
#[inline]
pub fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}
