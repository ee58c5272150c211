//! Scalar abstraction shared by the dense kernels.
//!
//! Everything numerically heavy is written against [`Real`], so the kernels
//! run in `f32` for quick experiments and in `f64` for anything that has to
//! meet the tolerances quoted in the tests.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point field usable by the kernels: `f32` or `f64`.
pub trait Real:
    RealField + Copy + Default + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Converts an `f64` literal. Every `Real` can represent (a rounding of) any finite `f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Relative tolerance floor: `max(rel, 100 * eps)`.
    #[inline]
    fn tol(rel: f64) -> Self {
        let floor = Self::default_epsilon() * Self::lit(100.0);
        let rel = Self::lit(rel);
        if rel > floor {
            rel
        } else {
            floor
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Real scalar promoted to a complex number.
#[inline]
pub fn cplx<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

#[inline]
pub fn is_finite<T: Real>(z: &Complex<T>) -> bool {
    let re = z.re.to_f64_lossy();
    let im = z.im.to_f64_lossy();
    re.is_finite() && im.is_finite()
}
