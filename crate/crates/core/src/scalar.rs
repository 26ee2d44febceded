//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real field the estimators are written against. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable in every Scalar")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Logistic sigmoid, evaluated without overflow for large |x|.
    #[inline]
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// log(1 + exp(x)), stable on both tails.
    #[inline]
    fn softplus(self) -> Self {
        if self > Self::zero() {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Debug
        + Display
        + FromStr
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Max-norm of a slice; zero for empty input.
pub fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Whether a trial objective value is no worse than `current`, allowing for
/// summation rounding. Near an optimum a Newton step changes the objective by
/// less than its rounding error, and comparing exactly would stall there.
pub fn no_decrease<T: Scalar>(trial: T, current: T) -> bool {
    trial.is_finite() && trial >= current - T::of(1024.0) * T::epsilon() * (T::one() + current.abs())
}

/// Newton iterations stop once the gradient max-norm is within `tol` and the
/// next Newton step is negligible. The step test tells an interior optimum
/// apart from a runaway (separated) direction, along which the gradient also
/// vanishes but the steps do not shrink.
pub(crate) fn newton_converged<T: Scalar>(gnorm: T, step: &[T], coef: &[T], tol: T) -> bool {
    gnorm <= tol && max_abs(step) <= tol.sqrt() * (T::one() + max_abs(coef))
}

/// Step halving from the full Newton step until the objective does not
/// decrease; `None` when no such step exists.
pub(crate) fn line_search<T: Scalar>(x: &[T], step: &[T], value: T, f: impl Fn(&[T]) -> T) -> Option<(Vec<T>, T)> {
    let mut scale = T::one();
    for _ in 0..60 {
        let trial: Vec<T> = x.iter().zip(step).map(|(&a, &d)| a + scale * d).collect();
        let v = f(&trial);
        if no_decrease(v, value) {
            return Some((trial, v));
        }
        scale *= T::of(0.5);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_tails() {
        assert_eq!(0.0f64.sigmoid(), 0.5);
        assert!((800.0f64).sigmoid() == 1.0);
        assert!((-800.0f64).sigmoid() > -1e-300);
        assert!(((-800.0f32).sigmoid()).is_finite());
    }

    #[test]
    fn softplus_matches_naive_in_range() {
        for &x in &[-20.0f64, -1.0, 0.0, 0.5, 3.0, 20.0] {
            let naive = (1.0 + x.exp()).ln();
            assert!((x.softplus() - naive).abs() < 1e-12);
        }
        assert!((1000.0f64.softplus() - 1000.0).abs() < 1e-12);
    }
}
