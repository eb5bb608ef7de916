//! Scalar abstraction shared by the numerical modules.
//!
//! Every recursion, loss and tensor kernel in this crate is written against
//! [`Scalar`] so the same code runs in `f32` (cheap training experiments) and
//! `f64` (likelihood fitting, gradient checks, persisted artifacts).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
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
    /// Converts an `f64` literal. Never fails for the two supported widths.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus<F: Scalar>(x: F) -> F {
    if x > F::lit(30.0) {
        x
    } else if x < F::lit(-30.0) {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`], the logistic function.
#[inline]
pub fn logistic<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
#[inline]
pub fn inverse_softplus<F: Scalar>(y: F) -> F {
    if y > F::lit(30.0) {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[inline]
pub fn logit<F: Scalar>(p: F) -> F {
    (p / (F::one() - p)).ln()
}

pub fn mean<F: Scalar>(xs: &[F]) -> F {
    if xs.is_empty() {
        return F::nan();
    }
    xs.iter().copied().sum::<F>() / F::from_usize_lossy(xs.len())
}

/// Mean of squares around zero; the variance estimator for zero-mean returns.
pub fn mean_square<F: Scalar>(xs: &[F]) -> F {
    if xs.is_empty() {
        return F::nan();
    }
    xs.iter().map(|&x| x * x).sum::<F>() / F::from_usize_lossy(xs.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_roundtrip() {
        for &y in &[1e-4_f64, 0.3, 1.0, 5.0, 40.0] {
            let x = inverse_softplus(y);
            assert!((softplus(x) - y).abs() < 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn logistic_is_softplus_slope() {
        for &x in &[-5.0_f64, -0.5, 0.0, 0.7, 12.0] {
            let h = 1e-6;
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((fd - logistic(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn works_in_f32() {
        let y = softplus(0.0_f32);
        assert!((y - std::f32::consts::LN_2).abs() < 1e-6);
    }
}
