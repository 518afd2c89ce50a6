//! Floating-point scalar abstraction.
//!
//! All numerical code in this crate is written against [`Scalar`] so it can be
//! run in either `f64` (the default, used by the harness) or `f32`. Each
//! implementation carries its own tolerance ladder, because the absolute
//! thresholds that make sense for double precision are below the resolution of
//! single precision.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Sum + 'static
{
    /// Absolute tolerance on constraint residuals for feasibility and set
    /// comparisons.
    fn feas_tol() -> Self;

    /// Width below which a polytope is treated as lower-dimensional.
    fn flat_tol() -> Self;

    /// Residual target for the interior-point iterations.
    fn ipm_tol() -> Self;

    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must be representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn feas_tol() -> f64 {
        1e-8
    }
    fn flat_tol() -> f64 {
        1e-7
    }
    fn ipm_tol() -> f64 {
        1e-10
    }
}

impl Scalar for f32 {
    fn feas_tol() -> f32 {
        1e-4
    }
    fn flat_tol() -> f32 {
        1e-3
    }
    fn ipm_tol() -> f32 {
        2e-5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder<T: Scalar>() {
        assert!(T::ipm_tol() < T::flat_tol());
        assert!(T::feas_tol() < T::flat_tol());
        assert!(T::feas_tol() > T::default_epsilon());
    }

    #[test]
    fn tolerance_ladders_are_ordered() {
        ladder::<f64>();
        ladder::<f32>();
        assert_eq!(f64::lit(0.75), 0.75);
        assert_eq!(0.5f32.as_f64(), 0.5);
    }
}
