//! Scalar abstraction for the analytic parts of the crate.
//!
//! Kernel identities, quadrature and the Volterra solver are written once
//! against [`Real`] and instantiated for `f32` and `f64`. Special functions
//! that `num-traits` does not provide are routed to `libm`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type usable by the analytic routines.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    fn erf(self) -> Self;
    fn erfc(self) -> Self;
    /// Gamma function.
    fn gamma(self) -> Self;

    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }
}

impl Real for f64 {
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
    #[inline]
    fn gamma(self) -> Self {
        libm::tgamma(self)
    }
}

impl Real for f32 {
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
    #[inline]
    fn gamma(self) -> Self {
        libm::tgammaf(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn special_functions_agree_across_precisions() {
        for &x in &[-2.0, -0.3, 0.0, 0.7, 1.9] {
            assert!((Real::erf(x as f32) as f64 - Real::erf(x)).abs() < 1e-6);
            assert!((Real::erfc(x as f32) as f64 - Real::erfc(x)).abs() < 1e-6);
        }
        assert!((Real::gamma(0.5f64) - std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert!((Real::gamma(1.5f32) - 0.886_226_9).abs() < 1e-6);
    }
}
