//! Simulation and verification of the 1-D stochastic heat equation
//! `∂u/∂t = ½Δu + σ(u)Ẇ`, `u(0, ·) = 1`.
//!
//! The numerical core (`kernel`, `quadrature`, `simulate`, `analysis::xi`,
//! the covariance oracles) is generic over [`Real`], implemented for `f32`
//! and `f64`. Monte Carlo summaries are kept in `f64`.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod ensemble;
pub mod kernel;
pub mod quadrature;
pub mod real;
pub mod simulate;

pub use real::Real;

pub type PathField64 = simulate::PathField<f64>;
pub type PathField32 = simulate::PathField<f32>;
pub type XiCurve64 = analysis::XiCurve<f64>;
pub type XiCurve32 = analysis::XiCurve<f32>;
pub type Quadrature64 = quadrature::QuadratureResult<f64>;
pub type Quadrature32 = quadrature::QuadratureResult<f32>;
pub type Integrator64 = quadrature::Integrator<f64>;
pub type Integrator32 = quadrature::Integrator<f32>;
