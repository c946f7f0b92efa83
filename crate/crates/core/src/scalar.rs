//! Floating-point abstraction shared by the policy, estimator, baseline and
//! theory code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used by the policy-gradient math: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal or measurement into this scalar.
    fn lit(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
}

/// Logistic function evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn squared_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_tails_do_not_overflow() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
        assert!((sigmoid(-30.0f64) - (-30.0f64).exp()).abs() < 1e-25);
        assert!((sigmoid(2.0f32) - 0.880_797).abs() < 1e-6);
    }
}
