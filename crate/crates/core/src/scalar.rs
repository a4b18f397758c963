//! Floating point abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Real scalar type the numeric kernels are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + 'static
{
    /// Type name recorded in serialized models.
    const NAME: &'static str;

    #[inline]
    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 is representable")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        <Self as NumCast>::from(v).expect("usize is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self.to_f32().expect("scalar converts to f32")
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

/// Squared Euclidean distance between two equal-length slices.
#[inline]
pub fn squared_l2<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}
