//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All math is written against [`Real`] so the same code runs in `f32` and
//! `f64`. The trait is a thin bundle over `nalgebra::RealField` (for the dense
//! factorizations) and `num_traits` conversions (for talking to the outside
//! world, which is always `f64`).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the solvers: `f32` or `f64`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Sum + Display + Debug + Send + Sync + 'static
{
    /// Converts an `f64` constant into `Self`.
    ///
    /// Used for literals and tolerances; every `f64` is representable
    /// (possibly rounded) in both supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossless widening to `f64`.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite real converts to f64")
    }

    #[inline]
    fn is_finite_real(self) -> bool {
        self.to_f64_lossy().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}
