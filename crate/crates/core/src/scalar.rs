//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type the estimators and analysis routines are generic over.
///
/// Implemented for `f32` and `f64`. Dense eigen-decompositions go through
/// nalgebra, so anything that is a `RealField` and converts to and from
/// primitive numbers qualifies.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Converts an `f64` constant into this type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must be representable")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count must be representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}
