//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the solvers and statistics are generic over.
///
/// The tolerance hooks let the same algorithms run in single precision with
/// looser thresholds; the `f64` values are the ones the solver contracts are
/// stated in.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Absolute primal feasibility tolerance.
    fn feas_tol() -> Self;
    /// Relative threshold under which a curvature is treated as zero.
    fn curvature_tol() -> Self;
    /// Relative threshold for sign decisions on multipliers and slopes.
    fn sign_tol() -> Self;
}

impl Scalar for f64 {
    fn feas_tol() -> Self {
        1e-8
    }
    fn curvature_tol() -> Self {
        1e-10
    }
    fn sign_tol() -> Self {
        1e-11
    }
}

impl Scalar for f32 {
    fn feas_tol() -> Self {
        1e-4
    }
    fn curvature_tol() -> Self {
        1e-5
    }
    fn sign_tol() -> Self {
        1e-6
    }
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

/// Lossy conversion to `f64` for reporting.
#[inline]
pub fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn inf_norm<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}
