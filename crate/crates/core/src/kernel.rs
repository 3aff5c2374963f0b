//! Gaussian heat kernel `p_t(x) = (2πt)^{-1/2} exp(-x²/2t)` (diffusivity ½)
//! and numerical verification of the identities built from it.
//!
//! Every identity has a closed form and an independent adaptive-quadrature
//! evaluation; the latter never uses the former. Infinite spatial domains are
//! truncated at 12 standard deviations of each Gaussian factor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{Integrator, QuadratureResult};
use crate::real::Real;

/// Number of standard deviations kept when truncating a Gaussian factor.
const TAIL_SDS: f64 = 12.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("time must be strictly positive, got {0}")]
    NonPositiveTime(f64),
    #[error("half-width must be non-negative (strictly positive for window mass), got {0}")]
    InvalidHalfWidth(f64),
    #[error("iterated kernel order must be at least 1")]
    ZeroOrder,
    #[error("quadrature verification of the iterated kernel is only offered for n <= 2, got n = {0}")]
    UnsupportedQuadrature(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelQuery<T> {
    pub t: T,
    pub x: T,
}

impl<T: Real> KernelQuery<T> {
    pub fn new(t: T, x: T) -> Result<Self, KernelError> {
        check_time(t)?;
        Ok(Self { t, x })
    }
}

fn check_time<T: Real>(t: T) -> Result<(), KernelError> {
    if t > T::zero() {
        Ok(())
    } else {
        Err(KernelError::NonPositiveTime(t.to_f64().unwrap_or(f64::NAN)))
    }
}

#[inline]
fn density<T: Real>(t: T, x: T) -> T {
    (-(x * x) / (t + t)).exp() / (T::TAU() * t).sqrt()
}

/// `p_t(x)`.
pub fn heat_kernel_density<T: Real>(q: KernelQuery<T>) -> Result<T, KernelError> {
    check_time(q.t)?;
    Ok(density(q.t, q.x))
}

/// Mass of `p_t(· - y)` on `[-R, R]`, via the error function.
pub fn window_mass<T: Real>(t: T, y: T, half_width: T) -> Result<T, KernelError> {
    check_time(t)?;
    if !(half_width > T::zero()) {
        return Err(KernelError::InvalidHalfWidth(half_width.to_f64().unwrap_or(f64::NAN)));
    }
    let scale = (t + t).sqrt();
    let ya = y.abs();
    let half = T::lit(0.5);
    if ya > half_width {
        // Difference of two small tails; erfc keeps the relative precision.
        Ok(half * (((ya - half_width) / scale).erfc() - ((ya + half_width) / scale).erfc()))
    } else {
        Ok(half * (((half_width - ya) / scale).erf() + ((half_width + ya) / scale).erf()))
    }
}

/// Interval outside of which the product of two Gaussians centred at `c1`,
/// `c2` with standard deviations `sd1`, `sd2` is negligible, plus interior
/// breakpoints at the centres. `None` when the truncated supports are disjoint.
fn product_support<T: Real>(c1: T, sd1: T, c2: T, sd2: T) -> Option<Vec<T>> {
    let k = T::lit(TAIL_SDS);
    let lo = (c1 - k * sd1).max(c2 - k * sd2);
    let hi = (c1 + k * sd1).min(c2 + k * sd2);
    if !(hi > lo) {
        return None;
    }
    let mut pts = vec![lo];
    let (a, b) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
    for c in [a, b] {
        if c > *pts.last().unwrap() && c < hi {
            pts.push(c);
        }
    }
    pts.push(hi);
    Some(pts)
}

/// `∫ p_t(x - y) p_s(y) dy` by adaptive quadrature.
pub fn heat_convolution<T: Real>(t: T, s: T, x: T) -> Result<QuadratureResult<T>, KernelError> {
    check_time(t)?;
    check_time(s)?;
    let Some(pts) = product_support(x, t.sqrt(), T::zero(), s.sqrt()) else {
        return Ok(QuadratureResult::zero());
    };
    Ok(Integrator::<T>::default().integrate_with_breaks(|y| density(t, x - y) * density(s, y), &pts))
}

/// `|∫ p_t(x - y) p_s(y) dy - p_{t+s}(x)|`; the error estimate and
/// convergence flag are those of the convolution quadrature.
pub fn semigroup_residual<T: Real>(t: T, s: T, x: T) -> Result<QuadratureResult<T>, KernelError> {
    let conv = heat_convolution(t, s, x)?;
    Ok(QuadratureResult {
        value: (conv.value - density(t + s, x)).abs(),
        ..conv
    })
}

/// Both sides of `p_t(x)² = (4πt)^{-1/2} p_{t/2}(x)`.
pub fn squared_kernel_reduction<T: Real>(t: T, x: T) -> Result<(T, T), KernelError> {
    check_time(t)?;
    let p = density(t, x);
    let lhs = p * p;
    let half_t = t * T::lit(0.5);
    let rhs = density(half_t, x) / (T::lit(4.0) * T::PI() * t).sqrt();
    Ok((lhs, rhs))
}

#[inline]
fn squared_density<T: Real>(t: T, x: T) -> T {
    let p = density(t, x);
    p * p
}

/// Standard deviation of the Gaussian shape of `p_a(·)²`.
#[inline]
fn squared_sd<T: Real>(a: T) -> T {
    (a * T::lit(0.5)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IteratedKernel<T> {
    pub closed_form: T,
    pub quadrature: Option<QuadratureResult<T>>,
}

/// The `n`-fold iterated integral of squared heat kernels over the time
/// simplex of width `tau`:
///
/// `∫_{0<r_n<…<r_1<τ} ∫_{ℝⁿ} p²_{τ-r_1}(w-z_1) p²_{r_1-r_2}(z_1-z_2) … p²_{r_n}(z_n)`,
///
/// whose value is `2^{-(n+1)} τ^{(n-1)/2} / Γ((n+1)/2) · p_{τ/2}(w)`.
/// With `verify` set the integral is also evaluated directly (`n ≤ 2`).
pub fn iterated_squared_kernel<T: Real>(
    n: usize,
    tau: T,
    w: T,
    verify: bool,
) -> Result<IteratedKernel<T>, KernelError> {
    if n == 0 {
        return Err(KernelError::ZeroOrder);
    }
    check_time(tau)?;
    let nf = T::from_usize_lossy(n);
    let one = T::one();
    let closed_form = T::lit(2.0).powf(-(nf + one)) * tau.powf((nf - one) * T::lit(0.5))
        / ((nf + one) * T::lit(0.5)).gamma()
        * density(tau * T::lit(0.5), w);
    let quadrature = match (verify, n) {
        (false, _) => None,
        (true, 1) => Some(iterated_quadrature_1(tau, w)),
        (true, 2) => Some(iterated_quadrature_2(tau, w)),
        (true, _) => return Err(KernelError::UnsupportedQuadrature(n)),
    };
    Ok(IteratedKernel {
        closed_form,
        quadrature,
    })
}

/// `∫ p²_a(c - z) p²_b(z) dz` by quadrature.
fn squared_pair<T: Real>(a: T, b: T, c: T, integrator: &Integrator<T>) -> QuadratureResult<T> {
    match product_support(c, squared_sd(a), T::zero(), squared_sd(b)) {
        Some(pts) => integrator.integrate_with_breaks(|z| squared_density(a, c - z) * squared_density(b, z), &pts),
        None => QuadratureResult::zero(),
    }
}

// Times are mapped through r = width·sin²θ, which removes the inverse square
// root singularities at both ends of every time interval.

fn iterated_quadrature_1<T: Real>(tau: T, w: T) -> QuadratureResult<T> {
    let inner = Integrator::new(T::zero(), T::lit(1e-11));
    let outer = Integrator::new(T::zero(), T::lit(1e-9));
    let mut evaluations = 0;
    let mut converged = true;
    let mut result = outer.integrate(
        |theta: T| {
            let (sn, cs) = theta.sin_cos();
            let r = tau * sn * sn;
            let q = squared_pair(tau - r, r, w, &inner);
            evaluations += q.evaluations;
            converged &= q.converged;
            q.value * tau * T::lit(2.0) * sn * cs
        },
        T::zero(),
        T::FRAC_PI_2(),
    );
    result.evaluations += evaluations;
    result.converged &= converged;
    result
}

fn iterated_quadrature_2<T: Real>(tau: T, w: T) -> QuadratureResult<T> {
    let level_z2 = Integrator::new(T::zero(), T::lit(1e-8));
    let level_z1 = Integrator::new(T::zero(), T::lit(1e-7));
    let level_r2 = Integrator::new(T::zero(), T::lit(1e-7));
    let level_r1 = Integrator::new(T::zero(), T::lit(1e-6));
    let two = T::lit(2.0);
    let mut evaluations = 0;
    let mut converged = true;

    let mut result = level_r1.integrate(
        |th1: T| {
            let (s1, c1) = th1.sin_cos();
            let r1 = tau * s1 * s1;
            let jac1 = tau * two * s1 * c1;
            let a0 = tau - r1;
            let q_r2 = level_r2.integrate(
                |th2: T| {
                    let (s2, c2) = th2.sin_cos();
                    let r2 = r1 * s2 * s2;
                    let jac2 = r1 * two * s2 * c2;
                    let a1 = r1 - r2;
                    // z1 ranges over the overlap of p²_{a0}(w - z1) and the
                    // inner convolution, which is centred at 0 with variance r1/2.
                    let Some(pts) = product_support(w, squared_sd(a0), T::zero(), squared_sd(r1)) else {
                        return T::zero();
                    };
                    let q_z1 = level_z1.integrate_with_breaks(
                        |z1: T| {
                            let q_z2 = squared_pair(a1, r2, z1, &level_z2);
                            evaluations += q_z2.evaluations;
                            converged &= q_z2.converged;
                            squared_density(a0, w - z1) * q_z2.value
                        },
                        &pts,
                    );
                    evaluations += q_z1.evaluations;
                    converged &= q_z1.converged;
                    q_z1.value * jac2
                },
                T::zero(),
                T::FRAC_PI_2(),
            );
            evaluations += q_r2.evaluations;
            converged &= q_r2.converged;
            q_r2.value * jac1
        },
        T::zero(),
        T::FRAC_PI_2(),
    );
    result.evaluations += evaluations;
    result.converged &= converged;
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FejerIntegral<T> {
    /// `πR`.
    pub closed_form: T,
    pub quadrature: QuadratureResult<T>,
}

/// `∫_ℝ sin²(Rξ)/ξ² dξ`.
///
/// The quadrature integrates `2R ∫_0^U sin²u/u² du` panel by panel with
/// `U = 200π` and adds the tail `1/(2U) - 1/(4U³)`, which is exact up to
/// `O(U⁻⁵)` because `sin 2U = 0` and `cos 2U = 1`.
pub fn fejer_tail_integral<T: Real>(half_width: T) -> Result<FejerIntegral<T>, KernelError> {
    if !(half_width >= T::zero()) {
        return Err(KernelError::InvalidHalfWidth(half_width.to_f64().unwrap_or(f64::NAN)));
    }
    if half_width == T::zero() {
        return Ok(FejerIntegral {
            closed_form: T::zero(),
            quadrature: QuadratureResult::zero(),
        });
    }
    const PANELS: usize = 200;
    let upper = T::from_usize_lossy(PANELS) * T::PI();
    let pts: Vec<T> = (0..=PANELS).map(|k| T::from_usize_lossy(k) * T::PI()).collect();
    let q = Integrator::new(T::lit(1e-13), T::zero()).integrate_with_breaks(
        |u: T| {
            if u == T::zero() {
                T::one()
            } else {
                let s = u.sin() / u;
                s * s
            }
        },
        &pts,
    );
    let tail = T::one() / (T::lit(2.0) * upper) - T::one() / (T::lit(4.0) * upper.powi(3));
    let scale = T::lit(2.0) * half_width;
    Ok(FejerIntegral {
        closed_form: T::PI() * half_width,
        quadrature: QuadratureResult {
            value: scale * (q.value + tail),
            abs_error_estimate: scale * q.abs_error_estimate,
            ..q
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs())
    }

    #[test]
    fn density_examples() {
        let p = heat_kernel_density(KernelQuery::new(1.0_f64, 0.0).unwrap()).unwrap();
        assert!((p - 0.398_942_280_4).abs() < 1e-10);
        let p = heat_kernel_density(KernelQuery { t: 0.5_f64, x: 1.0 }).unwrap();
        assert!((p - 0.207_553_748_7).abs() < 1e-10);
        assert_eq!(
            heat_kernel_density(KernelQuery { t: 0.0_f64, x: 1.0 }),
            Err(KernelError::NonPositiveTime(0.0))
        );
        assert!(KernelQuery::new(-1.0_f64, 0.0).is_err());
    }

    #[test]
    fn window_mass_examples() {
        assert!((window_mass(1.0_f64, 0.0, 100.0).unwrap() - 1.0).abs() < 1e-12);
        let far = window_mass(1.0_f64, 50.0, 1.0).unwrap();
        assert!((0.0..1e-100).contains(&far));
        assert!((window_mass(1.0_f64, 0.0, 1.0).unwrap() - 0.682_689_492_1).abs() < 1e-10);
        assert!(window_mass(0.0_f64, 0.0, 1.0).is_err());
        assert!(window_mass(1.0_f64, 0.0, 0.0).is_err());
    }

    #[test]
    fn window_mass_tail_keeps_relative_precision() {
        // mass of N(6, 1) on [-1, 1] ~ Φ(-5) - Φ(-7)
        let m = window_mass(1.0_f64, 6.0, 1.0).unwrap();
        assert!(rel(m, 2.866_502_920_666_494e-7) < 1e-12);
    }

    #[test]
    fn semigroup_examples() {
        let r = semigroup_residual(1.0_f64, 1.0, 0.0).unwrap();
        assert!(r.converged && r.value <= 1e-10);
        let r = semigroup_residual(0.1_f64, 2.0, 3.0).unwrap();
        assert!(r.converged && r.value <= 1e-10, "{r:?}");
        let c = heat_convolution(1.0_f64, 1.0, 0.0).unwrap();
        assert!((c.value - 0.282_094_791_8).abs() < 1e-10);
        assert!(semigroup_residual(1.0_f64, -1.0, 0.0).is_err());
    }

    #[test]
    fn semigroup_extreme_corners() {
        for &(t, s, x) in &[
            (0.01, 10.0, 10.0),
            (10.0, 0.01, -10.0),
            (0.01, 0.01, 0.0),
            (10.0, 10.0, 10.0),
        ] {
            let r = semigroup_residual(t, s, x).unwrap();
            assert!(r.value <= 1e-10, "({t},{s},{x}) -> {r:?}");
        }
    }

    #[test]
    fn squared_reduction_examples() {
        let (l, r) = squared_kernel_reduction(1.0_f64, 0.0).unwrap();
        assert!((l - 0.159_154_943_1).abs() < 1e-10);
        assert!(rel(l, r) <= 1e-14);
        let (l, r) = squared_kernel_reduction(2.0_f64, 1.0).unwrap();
        assert!(rel(l, r) <= 1e-14);
        let (l, r) = squared_kernel_reduction(1.0_f64, 10.0).unwrap();
        assert!(l < 1e-20 && r < 1e-20);
        assert!(rel(l, r) <= 1e-14);
    }

    #[test]
    fn iterated_kernel_examples() {
        let k = iterated_squared_kernel(1, 1.0_f64, 0.0, true).unwrap();
        assert!((k.closed_form - 0.141_047_395_9).abs() < 1e-10);
        let q = k.quadrature.unwrap();
        assert!(rel(q.value, k.closed_form) < 1e-6, "{q:?}");

        let far = iterated_squared_kernel(1, 1.0_f64, 40.0, false).unwrap();
        assert!(far.closed_form < 1e-300);

        assert!(matches!(
            iterated_squared_kernel(0, 1.0_f64, 0.0, false),
            Err(KernelError::ZeroOrder)
        ));
        assert!(matches!(
            iterated_squared_kernel(3, 1.0_f64, 0.0, true),
            Err(KernelError::UnsupportedQuadrature(3))
        ));
        // closed form is still available for any n
        assert!(iterated_squared_kernel(7, 1.0_f64, 0.0, false).unwrap().closed_form > 0.0);
    }

    #[test]
    fn iterated_kernel_second_order() {
        let k = iterated_squared_kernel(2, 1.0_f64, 0.0, true).unwrap();
        assert!((k.closed_form - 0.079_577_471_5).abs() < 1e-10);
        let q = k.quadrature.unwrap();
        assert!(rel(q.value, k.closed_form) < 1e-4, "{q:?}");
    }

    #[test]
    fn fejer_examples() {
        let f = fejer_tail_integral(0.0_f64).unwrap();
        assert_eq!(f.closed_form, 0.0);
        assert_eq!(f.quadrature.value, 0.0);
        let f = fejer_tail_integral(1.0_f64).unwrap();
        assert!((f.quadrature.value - std::f64::consts::PI).abs() < 1e-8);
        let f = fejer_tail_integral(2.0_f64).unwrap();
        assert!((f.quadrature.value - 2.0 * std::f64::consts::PI).abs() < 1e-8);
        assert!(fejer_tail_integral(-1.0_f64).is_err());
    }

    #[test]
    fn single_precision_density() {
        let p = heat_kernel_density(KernelQuery { t: 1.0f32, x: 0.0 }).unwrap();
        assert!((p - 0.398_942_3).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn density_is_symmetric_and_positive(t in 0.01f64..10.0, x in -5.0f64..5.0) {
            let a = heat_kernel_density(KernelQuery { t, x }).unwrap();
            let b = heat_kernel_density(KernelQuery { t, x: -x }).unwrap();
            prop_assert!(a > 0.0);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn window_mass_monotone(t in 0.05f64..5.0, y in -6.0f64..6.0, r in 0.1f64..5.0, dr in 0.01f64..2.0) {
            let m = window_mass(t, y, r).unwrap();
            prop_assert!(m > 0.0 && m <= 1.0);
            prop_assert!(window_mass(t, y, r + dr).unwrap() >= m);
            prop_assert!(window_mass(t, y.abs() + dr, r).unwrap() <= window_mass(t, y.abs(), r).unwrap());
        }
    }
}
