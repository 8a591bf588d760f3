//! Floating point abstraction used by the scoring code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type that metric and tree-scoring computations are generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts a count into the scalar type.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as float")
    }

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 representable as scalar")
    }

    fn hundred() -> Self {
        Self::from_count(100)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `num / den`, or zero when the denominator vanishes.
pub(crate) fn ratio<T: Scalar>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_count(num) / T::from_count(den)
    }
}

/// Harmonic F-beta combination of precision and recall; zero when both are zero.
pub(crate) fn f_beta<T: Scalar>(precision: T, recall: T, beta: T) -> T {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom <= T::zero() {
        T::zero()
    } else {
        (T::one() + b2) * precision * recall / denom
    }
}
