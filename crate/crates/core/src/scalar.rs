//! Scalar abstraction for the geometry kernel.
//!
//! Everything geometric is written against [`Scalar`], which bundles the
//! `num_traits` float machinery with the handful of tolerances the kernel
//! needs. The tolerances are per type: `1e-12` is meaningless for `f32`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type usable by the surface, tracer and zippered modules.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Absolute distance below which a ray is considered to hit a vertex.
    fn corner_tol() -> Self;
    /// Relative tolerance for edge parallelism and length checks.
    fn rel_tol() -> Self;
    /// Absolute tolerance on total cone angles, in radians.
    fn angle_tol() -> Self;
    /// Allowed deviation of `det` from 1 for group elements.
    fn det_tol() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f64 {
    #[inline]
    fn corner_tol() -> Self {
        1e-12
    }
    #[inline]
    fn rel_tol() -> Self {
        1e-9
    }
    #[inline]
    fn angle_tol() -> Self {
        1e-7
    }
    #[inline]
    fn det_tol() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    #[inline]
    fn corner_tol() -> Self {
        1e-5
    }
    #[inline]
    fn rel_tol() -> Self {
        1e-5
    }
    #[inline]
    fn angle_tol() -> Self {
        1e-4
    }
    #[inline]
    fn det_tol() -> Self {
        1e-5
    }
}
