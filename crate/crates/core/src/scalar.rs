use num_rational::Ratio;
use num_traits::{One, Zero};
use std::ops::{Add, Div, Mul};

/// Number type precision/recall/F1 are computed in.
///
/// Implemented for `f32`, `f64` and exact rationals, so the same formulas can
/// produce report values and exact reference values.
pub trait Scalar:
    Copy
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + std::fmt::Debug
{
    fn from_count(n: u64) -> Self;

    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

macro_rules! rational_scalar {
    ($($int:ty),*) => {$(
        impl Scalar for Ratio<$int> {
            fn from_count(n: u64) -> Self {
                Ratio::from_integer(<$int>::try_from(n).expect("count exceeds rational range"))
            }

            fn to_f64(self) -> f64 {
                *self.numer() as f64 / *self.denom() as f64
            }
        }
    )*};
}

rational_scalar!(i64, u64, i128);
