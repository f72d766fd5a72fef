//! Numeric abstraction shared by the light field, the policy comparators and
//! the assignment solver.
//!
//! Floating point (`f32`, `f64`) is used for simulation. [`BigRational`] is
//! supported so that field sums can be checked with exact arithmetic; its
//! square root goes through `f64` and is therefore only as exact as the float.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};

/// Scalar type the light-field and policy code is generic over.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    fn from_u64(v: u64) -> Self;

    /// Converts a float. Rational scalars take the float's exact binary value.
    fn from_f64(v: f64) -> Self;

    fn to_f64(&self) -> f64;

    fn sqrt(&self) -> Self;
}

macro_rules! impl_float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            #[inline]
            fn from_u64(v: u64) -> Self {
                v as $t
            }

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn to_f64(&self) -> f64 {
                *self as f64
            }

            #[inline]
            fn sqrt(&self) -> Self {
                <$t>::sqrt(*self)
            }
        }
    )*};
}

impl_float_scalar!(f32, f64);

impl Scalar for BigRational {
    fn from_u64(v: u64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite float")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn sqrt(&self) -> Self {
        // f64 sqrt is correctly rounded, so perfect squares stay exact
        Self::from_f64(Scalar::to_f64(self).sqrt())
    }
}
