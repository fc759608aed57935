//! Scalar abstraction for the numeric pipeline.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar the engine is generic over.
///
/// Implemented for `f32` and `f64`. Conversions through `f64` are used for
/// constants and for serialization; both implementors support them exactly
/// (`f32` up to rounding).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum<Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Scalar")
    }

    /// Converts this scalar to `f64` (exact for f64, widening for f32).
    fn to_f64_value(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Converts a usize count into this scalar type.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_generic<S: Scalar>(xs: &[S]) -> S {
        xs.iter().copied().sum()
    }

    #[test]
    fn works_for_both_precisions() {
        assert_eq!(sum_generic(&[1.0f32, 2.0, 3.0]), 6.0f32);
        assert_eq!(sum_generic(&[1.0f64, 2.0, 3.0]), 6.0f64);
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(f64::lit(0.5).to_f64_value(), 0.5);
        assert_eq!(f64::from_count(7), 7.0);
    }
}
