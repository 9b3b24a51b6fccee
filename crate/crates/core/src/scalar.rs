//! Floating-point abstraction shared by every estimator in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used by the estimators: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for literal constants.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    fn from_count(v: usize) -> Self {
        Self::from_usize(v).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Componentwise `a <= b`, the order used by the indicator weight `1{X <= x}`.
#[inline]
pub fn leq_all<S: Scalar>(a: &[S], b: &[S]) -> bool {
    a.iter().zip(b).all(|(u, v)| u <= v)
}

/// Logistic CDF `exp(a) / (1 + exp(a))`, evaluated without overflow.
#[inline]
pub fn logistic<S: Scalar>(a: S) -> S {
    if a >= S::zero() {
        S::one() / (S::one() + (-a).exp())
    } else {
        let e = a.exp();
        e / (S::one() + e)
    }
}
