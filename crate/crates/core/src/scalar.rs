//! Floating-point abstraction shared by every scoring routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used throughout the scoring math. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Smallest probability allowed before a logarithm is taken.
    fn prob_floor() -> Self;

    /// Converts an `f64` literal; panics only if the target type cannot hold it at all.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_count(count: usize) -> Self {
        Self::from_usize(count).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Natural log of `self` after flooring it at [`Scalar::prob_floor`].
    #[inline]
    fn floored_ln(self) -> Self {
        self.max(Self::prob_floor()).ln()
    }
}

impl Scalar for f32 {
    fn prob_floor() -> Self {
        f32::MIN_POSITIVE
    }
}

impl Scalar for f64 {
    fn prob_floor() -> Self {
        1e-300
    }
}

/// Numerically stable `ln(Σ exp(x_i))`. Returns `-inf` for an empty input.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let total: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + total.ln()
}

/// Arithmetic mean; callers guarantee a nonempty slice.
pub(crate) fn mean<T: Scalar>(values: &[T]) -> T {
    let total: T = values.iter().copied().sum();
    total / T::from_count(values.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_single_is_exact() {
        let x = -1.2345_f64;
        assert_eq!(log_sum_exp(&[x]), x);
    }

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let xs = [0.25_f64.ln(), 0.25_f64.ln()];
        assert!((log_sum_exp(&xs) - 0.5_f64.ln()).abs() < 1e-15);
        let ys = [-1000.0_f64, -1000.0];
        assert!((log_sum_exp(&ys) - (-1000.0 + 2.0_f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn floors_differ_by_precision() {
        assert!(f32::prob_floor() > 0.0);
        assert_eq!(0.0_f64.floored_ln(), 1e-300_f64.ln());
    }
}
