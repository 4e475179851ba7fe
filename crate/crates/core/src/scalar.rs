//! Scalar abstractions.
//!
//! Geometry, orbit construction and the cocycle algebra are written against
//! [`Real`], a floating point type (`f32` or `f64`). The symbolic layer only
//! needs field arithmetic and works with [`Probability`], which also admits
//! exact rationals.

use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar used by the geometric and linear-algebra layers.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    /// A tolerance of nominal size `x`, floored at a small multiple of the
    /// type's machine epsilon so that `f64` tolerances remain meaningful in
    /// `f32`.
    #[inline]
    fn tol(x: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(64.0);
        Self::lit(x).max(floor)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Scalar for probability vectors and transition matrices.
///
/// Any type with field operations and a lossy conversion to `f64` works,
/// notably `f64` and [`num_rational::Rational64`] for exact cylinder
/// arithmetic.
pub trait Probability: Num + Clone + PartialOrd + ToPrimitive + FromPrimitive + Debug {
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn abs_value(&self) -> Self {
        if *self < Self::zero() {
            Self::zero() - self.clone()
        } else {
            self.clone()
        }
    }

    #[inline]
    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Probability for T where T: Num + Clone + PartialOrd + ToPrimitive + FromPrimitive + Debug {}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn tolerance_floors_at_epsilon() {
        assert_eq!(f64::tol(1e-12), 1e-12);
        assert!(f32::tol(1e-12) > 1e-6);
    }

    #[test]
    fn rationals_are_probabilities() {
        let third = Rational64::one() / Rational64::from_count(3);
        assert_eq!(third * Rational64::from_count(3), Rational64::one());
        assert_eq!((Rational64::zero() - third).abs_value(), third);
        assert!((third.approx() - 1.0 / 3.0).abs() < 1e-16);
    }

    use num_traits::{One, Zero};
}
