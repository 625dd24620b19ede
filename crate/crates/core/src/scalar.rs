//! Scalar abstraction used by every numerical routine in the crate.
//!
//! All matrix math is written against [`FloatT`] so the same code runs in
//! `f32` or `f64`; the concrete aliases at the crate root pin `f64`, which is
//! what the solver tolerances in [`crate::ipm`] are calibrated for.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait FloatT:
    RealField + FromPrimitive + ToPrimitive + Copy + Default + std::fmt::Display + std::fmt::LowerExp
{
}

impl FloatT for f32 {}
impl FloatT for f64 {}

/// Converts an `f64` constant to the working scalar type.
#[inline]
pub fn fl<T: FloatT>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant converts to the working scalar")
}

/// Converts a `usize` count to the working scalar type.
#[inline]
pub fn fl_usize<T: FloatT>(x: usize) -> T {
    T::from_usize(x).expect("usize converts to the working scalar")
}

/// Widens a scalar back to `f64` for reporting and diagnostics.
#[inline]
pub fn as_f64<T: FloatT>(x: T) -> f64 {
    x.to_f64().expect("scalar widens to f64")
}
