//! Scalar abstraction shared by every numerical routine in the crate.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating point scalar the solvers are generic over.
///
/// Implemented for `f32` and `f64`. Every tolerance in the crate is expressed
/// in `f64` and converted with [`Real::c`], so the `f32` instantiation works
/// but cannot reach the tolerances the verification suite asks for.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative tolerance floor that makes sense for this precision.
    #[inline]
    fn tol(v: f64) -> Self {
        let eps = Self::epsilon().as_f64();
        Self::c(v.max(64.0 * eps))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// 2-D point or vector.
pub type Vec2<T> = [T; 2];

#[inline]
pub(crate) fn dot<T: Real>(a: Vec2<T>, b: Vec2<T>) -> T {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn sub<T: Real>(a: Vec2<T>, b: Vec2<T>) -> Vec2<T> {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn norm<T: Real>(a: Vec2<T>) -> T {
    a[0].hypot(a[1])
}

/// Converts between two scalar types through `f64`.
#[inline]
pub fn cast<S: Real, T: Real>(v: S) -> T {
    T::c(v.as_f64())
}
