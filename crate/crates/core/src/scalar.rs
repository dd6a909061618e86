//! Floating-point abstraction shared by the model, losses and metrics.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the numeric core is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Floor applied inside every logarithm.
    fn log_floor() -> Self {
        Self::from_f64(1e-12).unwrap_or_else(Self::min_positive_value)
    }

    /// Lossy conversion from `f64`; panics only for non-representable types.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 representable in scalar type")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `ln(max(x, floor))`.
#[inline]
pub fn safe_ln<T: Scalar>(x: T) -> T {
    x.max(T::log_floor()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_guards_zero() {
        assert!((safe_ln(0.0f64) - (1e-12f64).ln()).abs() < 1e-15);
        assert!(safe_ln(0.0f32).is_finite());
    }
}
