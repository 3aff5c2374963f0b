//! Increment moments `E|G_R(t) - G_R(s)|^p` against the scale `R^{p/2}(t-s)^{p/2}`.

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSummary, Halves};

use super::covariance::index_of;
use super::xi::XiCurve;
use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementMoment {
    pub p: u32,
    pub s: f64,
    pub t: f64,
    pub half_width: f64,
    pub n: u64,
    /// `Ê|G_R(t) - G_R(s)|^p`.
    pub moment: f64,
    /// `moment / (R^{p/2} (t-s)^{p/2})`; 0 when `s = t`.
    pub ratio: f64,
    /// Set when `s = t` and the ratio is 0 by convention.
    pub degenerate: bool,
    /// For `p = 2` with a ξ curve: the large-R value `2∫_s^t ξ / (t-s)` of the ratio.
    pub sharp_prediction: Option<f64>,
}

impl IncrementMoment {
    pub fn sharp_relative_error(&self) -> Option<f64> {
        self.sharp_prediction.map(|c| (self.ratio - c).abs() / c)
    }
}

pub fn increment_moment_check(
    summary: &EnsembleSummary,
    p: u32,
    s: f64,
    t: f64,
    half_width: f64,
    xi: Option<&XiCurve<f64>>,
) -> Result<IncrementMoment, AnalysisError> {
    if p != 2 && p != 4 {
        return Err(AnalysisError::InvalidArgument(format!(
            "moment order must be 2 or 4, got {p}"
        )));
    }
    let cfg = &summary.config;
    let r = index_of(&cfg.r_values, half_width).ok_or(AnalysisError::MissingWindow(half_width))?;
    let is = index_of(&cfg.observation_times, s).ok_or(AnalysisError::MissingTime(s))?;
    let it = index_of(&cfg.observation_times, t).ok_or(AnalysisError::MissingTime(t))?;
    if is == it {
        return Ok(IncrementMoment {
            p,
            s,
            t,
            half_width,
            n: summary.count(),
            moment: 0.0,
            ratio: 0.0,
            degenerate: true,
            sharp_prediction: None,
        });
    }
    if s > t {
        return Err(AnalysisError::InvalidArgument(format!(
            "need s < t, got s = {s}, t = {t}"
        )));
    }
    let (n, s2, s4) = summary.increment_sums(r, is, it, Halves::All);
    if n == 0 {
        return Err(AnalysisError::InsufficientData("no paths in summary".into()));
    }
    let moment = if p == 2 { s2 } else { s4 } / n as f64;
    let scale = (half_width * (t - s)).powi(p as i32 / 2);
    let sharp_prediction = match (p, xi) {
        (2, Some(xi)) => Some(2.0 * xi.integral(s, t)? / (t - s)),
        _ => None,
    };
    Ok(IncrementMoment {
        p,
        s,
        t,
        half_width,
        n,
        moment,
        ratio: moment / scale,
        degenerate: false,
        sharp_prediction,
    })
}
