//! Scalar abstraction for the numeric core.
//!
//! The photon-statistics routines are generic over the floating-point type;
//! `f64` instantiations are re-exported at the crate root and are what the
//! simulation stack uses.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + core::ops::AddAssign + core::fmt::Debug + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + core::ops::AddAssign + core::fmt::Debug + Send + Sync + 'static
{
}

/// Converts an `f64` literal into `T`. Panics only for literals a float type
/// cannot represent approximately, which none of ours are.
#[inline]
pub(crate) fn lit<T: Real>(value: f64) -> T {
    T::from_f64(value).expect("literal representable in scalar type")
}

/// Converts a count or index into `T`.
#[inline]
pub(crate) fn from_count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}
