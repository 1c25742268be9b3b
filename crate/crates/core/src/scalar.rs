//! Numeric traits the library is generic over.
//!
//! Counting statistics and their permutation moments only need field
//! arithmetic, so they are written against [`Scalar`], which is satisfied by
//! `f32`, `f64` and exact rationals such as [`BigRational`](num_rational::BigRational).
//! Geometry (distances, k-means, data generation) needs square roots and
//! ordering of floats and is written against [`Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

/// Field-like scalar for exact or floating-point evaluation of count moments.
pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Converts a count. Every scalar we support represents `usize` values
    /// (floats up to rounding).
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Converts a wide integer by splitting it so that rationals stay exact.
    fn from_wide(n: i128) -> Self {
        if let Some(v) = i64::try_from(n).ok().and_then(Self::from_i64) {
            return v;
        }
        let shift = Self::from_u64(1u64 << 62).expect("2^62 representable");
        let hi = n >> 62;
        let lo = n - (hi << 62);
        Self::from_wide(hi) * shift + Self::from_i64(lo as i64).expect("low word representable")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Clone
        + Debug
        + PartialOrd
        + Num
        + Signed
        + FromPrimitive
        + ToPrimitive
        + Send
        + Sync
        + 'static
{
}

/// Floating-point scalar for geometry and clustering.
pub trait Real: Scalar + Float + Copy + Display + FromStr + Sum + Default {}

impl Real for f32 {}
impl Real for f64 {}

/// Relative error with a unit floor on the denominator, so that exactly-zero
/// reference values compare on an absolute scale.
pub fn relative_error<T: Scalar>(value: &T, reference: &T) -> f64 {
    let diff = (value.clone() - reference.clone()).abs().to_f64_lossy();
    let scale = reference.abs().to_f64_lossy().max(1.0);
    diff / scale
}
