//! Scalar abstraction: every solver is written once over [`Real`] and
//! instantiated for `f32` and `f64`.
//!
//! `RealField` supplies the elementary functions and the dense linear algebra
//! of `nalgebra`; the `num-traits` bounds supply constants and conversions.

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

pub trait Real:
    RealField + Copy + FloatConst + FromPrimitive + ToPrimitive + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal; every finite literal used by the crate is representable.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in the scalar type")
    }

    #[inline]
    fn of(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in the scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Total solid angle of the unit sphere.
    #[inline]
    fn four_pi() -> Self {
        Self::lit(4.0) * Self::PI()
    }

    /// Machine epsilon of the concrete type.
    #[inline]
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl<T> Real for T where
    T: RealField + Copy + FloatConst + FromPrimitive + ToPrimitive + Default + Send + Sync + 'static
{
}

/// Maximum absolute value of a slice (0 for an empty slice).
pub fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}
