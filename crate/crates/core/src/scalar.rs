//! Floating point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar type the kernel, solvers and trainer are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances that depend on the working
/// precision live here so generic code never hard-codes an `f64` epsilon.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Relative residual accepted from a triangular-solve pass.
    const SOLVE_RTOL: f64;
    /// Largest capacitance condition number the low-rank update trusts.
    const MAX_CAPACITANCE_COND: f64;
    /// Pre-normalization row norm below which an aggregated row is degenerate.
    const DEGENERATE_ROW_NORM: f64;

    /// Lossless-enough conversion from `f64` constants.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 constant representable")
    }

    /// Widening conversion used for reporting and file output.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const SOLVE_RTOL: f64 = 1e-8;
    const MAX_CAPACITANCE_COND: f64 = 1e12;
    const DEGENERATE_ROW_NORM: f64 = 1e-10;
}

impl Scalar for f32 {
    const SOLVE_RTOL: f64 = 1e-3;
    const MAX_CAPACITANCE_COND: f64 = 1e6;
    const DEGENERATE_ROW_NORM: f64 = 1e-6;
}

/// Euclidean dot product.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Euclidean norm.
#[inline]
pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
