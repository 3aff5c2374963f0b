//! Statistics of the spatial averages `G_R(t)` and their oracles.

use thiserror::Error;

use crate::kernel::KernelError;
use crate::simulate::SimulateError;

pub mod covariance;
pub mod normality;
pub mod rate;
pub mod spatial;
pub mod tightness;
pub mod xi;

pub use covariance::{
    asymptotic_variance, exact_covariance_finite_r, fdd_compare, fdd_covariance, simulate_limit_process, window_kernel,
    CovMatrix, FddComparison,
};
pub use normality::{ks_band_95, normality_stats, normalize_f, NormalityReport, SigmaMode};
pub use rate::{clt_rate_fit, RateFit};
pub use spatial::{spatial_integral, window_integral};
pub use tightness::{increment_moment_check, IncrementMoment};
pub use xi::{estimate_xi, estimate_xi_from, uniform_grid, volterra_xi_pam, XiCurve, XiSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("window half-width {half_width} exceeds R_max = {max_window}; the localization margin would be violated")]
    WindowTooWide { half_width: f64, max_window: f64 },
    #[error("invalid ξ curve: {0}")]
    InvalidXi(String),
    #[error("ξ is needed up to t = {needed} but only covers [0, {horizon}]")]
    XiCoverage { needed: f64, horizon: f64 },
    #[error("the Volterra solver needs a uniform grid starting at 0")]
    NonUniformGrid,
    #[error("the summary holds no ξ accumulators (record_xi was off or no paths ran)")]
    NoXiData,
    #[error("covariance matrix is not positive semidefinite (pivot {pivot} at index {index})")]
    NotPsd { pivot: f64, index: usize },
    #[error("R = {0} was not recorded in the summary")]
    MissingWindow(f64),
    #[error("t = {0} was not recorded in the summary")]
    MissingTime(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("sample contains non-finite values")]
    NonFiniteSample,
    #[error("σ_R = {0}: the normalization needs σ_R > 0, which fails when σ(1) = 0 makes the solution deterministic")]
    DegenerateVariance(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Grid(#[from] SimulateError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}
