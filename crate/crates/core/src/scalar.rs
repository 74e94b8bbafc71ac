//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar: `f32` or `f64`.
///
/// All tolerances in [`crate::Tolerances`] are stored as `f64` and converted
/// with [`Real::c`]; numerical floors are clamped against `Self::epsilon()` so
/// that single precision degrades gracefully instead of looping forever.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + LowerExp + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    /// Lossy conversion used for reports and error payloads.
    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `max(tol, k * eps)`: a tolerance that is attainable in this precision.
    #[inline]
    fn floor_tol(tol: f64, k: f64) -> Self {
        let t = Self::c(tol);
        let e = Self::epsilon() * Self::c(k);
        if t > e {
            t
        } else {
            e
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Value and first two derivatives of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<T> {
    pub value: T,
    pub d1: T,
    pub d2: T,
}

impl<T: Real> Jet<T> {
    pub fn new(value: T, d1: T, d2: T) -> Self {
        Self { value, d1, d2 }
    }

    pub fn identity(x: T) -> Self {
        Self::new(x, T::one(), T::zero())
    }
}
