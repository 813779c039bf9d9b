//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Everything is written against [`Scalar`] so the same code runs in `f32`,
//! `f64`, or an extended-precision float that implements `num_traits::Float`.

use std::fmt::Debug;

use num_traits::{Float, NumCast};

/// Floating point type usable by the solvers.
pub trait Scalar: Float + Debug + Send + Sync + 'static {
    /// Converts an `f64` literal. Goes through `NumCast` since some
    /// extended-precision types ship a broken `FromPrimitive`.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T: Float + Debug + Send + Sync + 'static> Scalar for T {}

/// Relative closeness test: `|a - b| <= tol * max(|a|, |b|)`.
///
/// Two exact zeros compare equal.
#[inline]
pub fn rel_close<T: Scalar>(a: T, b: T, tol: T) -> bool {
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= tol * scale
}

/// Sums an iterator of scalars.
#[inline]
pub fn sum<T: Scalar, I: IntoIterator<Item = T>>(iter: I) -> T {
    iter.into_iter().fold(T::zero(), |acc, x| acc + x)
}
