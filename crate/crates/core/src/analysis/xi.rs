//! The curve `ξ(s) = E[σ(u(s,x))²]`: Monte Carlo estimates and the Volterra
//! oracle for the parabolic Anderson model.

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSummary, ExactSum, Halves};
use crate::real::Real;

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiSource {
    MonteCarlo,
    VolterraOracle,
    Constant,
}

/// Samples of ξ on an increasing time grid starting at 0; evaluated between
/// samples by linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiCurve<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    /// Monte Carlo standard errors, one per sample.
    pub std_errors: Option<Vec<T>>,
    pub source: XiSource,
}

impl<T: Real> XiCurve<T> {
    pub fn new(times: Vec<T>, values: Vec<T>, source: XiSource) -> Result<Self, AnalysisError> {
        let c = Self {
            times,
            values,
            std_errors: None,
            source,
        };
        c.check()?;
        Ok(c)
    }

    /// `ξ ≡ value` on `[0, horizon]`.
    pub fn constant(value: T, horizon: T) -> Self {
        Self {
            times: vec![T::zero(), horizon],
            values: vec![value, value],
            std_errors: None,
            source: XiSource::Constant,
        }
    }

    fn check(&self) -> Result<(), AnalysisError> {
        let bad = |m: &str| Err(AnalysisError::InvalidXi(m.to_string()));
        if self.times.len() < 2 || self.times.len() != self.values.len() {
            return bad("need at least two samples and one value per time");
        }
        if self.times[0] != T::zero() {
            return bad("times must start at 0");
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("times must be strictly increasing");
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return bad("values must be finite and non-negative");
        }
        Ok(())
    }

    pub fn horizon(&self) -> T {
        *self.times.last().unwrap()
    }

    pub fn ensure_covers(&self, t: T) -> Result<(), AnalysisError> {
        let h = self.horizon();
        if t < T::zero() || t > h + h * T::lit(1e-12) {
            return Err(AnalysisError::XiCoverage {
                needed: t.to_f64().unwrap_or(f64::NAN),
                horizon: h.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    fn segment(&self, t: T) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.clamp(1, self.times.len() - 1) - 1
    }

    pub fn eval(&self, t: T) -> T {
        let k = self.segment(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = ((t - t0) / (t1 - t0)).max(T::zero()).min(T::one());
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }

    /// `∫_a^b ξ` of the interpolant (trapezoid rule at the sample times).
    pub fn integral(&self, a: T, b: T) -> Result<T, AnalysisError> {
        self.ensure_covers(a)?;
        self.ensure_covers(b)?;
        if b < a {
            return Ok(-self.integral(b, a)?);
        }
        let h = self.horizon();
        let (a, b) = (a.min(h), b.min(h));
        let half = T::lit(0.5);
        let mut total = T::zero();
        let mut lo = a;
        let mut k = self.segment(a);
        while lo < b {
            let hi = b.min(self.times[k + 1]);
            total = total + (hi - lo) * half * (self.eval(lo) + self.eval(hi));
            lo = hi;
            k += 1;
            if k + 1 >= self.times.len() {
                break;
            }
        }
        Ok(total)
    }

    /// Sample times as interior breakpoints of `[a, b]`, for quadrature.
    pub fn breakpoints(&self, a: T, b: T) -> Vec<T> {
        let mut pts = vec![a];
        pts.extend(self.times.iter().copied().filter(|&t| t > a && t < b));
        pts.push(b);
        pts
    }
}

/// Solves `ξ(t) = 1 + ∫_0^t ξ(r) (4π(t-r))^{-1/2} dr` on the uniform grid
/// `times` by product integration: ξ is interpolated linearly between nodes
/// and the singular kernel is integrated exactly against each hat function.
pub fn volterra_xi_pam<T: Real>(times: &[T]) -> Result<XiCurve<T>, AnalysisError> {
    if times.len() < 2 || times[0] != T::zero() {
        return Err(AnalysisError::InvalidXi(
            "Volterra grid must start at 0 with at least two nodes".into(),
        ));
    }
    let n = times.len() - 1;
    let h = times[n] / T::from_usize_lossy(n);
    let tol = T::lit(1e-9) * times[n];
    for (k, &t) in times.iter().enumerate() {
        if !(t.is_finite() && (t - h * T::from_usize_lossy(k)).abs() <= tol) || !(h > T::zero()) {
            return Err(AnalysisError::NonUniformGrid);
        }
    }
    // Weights of the lag-j cell [t_n - (j+1)h, t_n - jh] on its left node
    // (older sample) and right node, in a cancellation-free form.
    let c = T::one() / (T::lit(4.0) * T::PI()).sqrt();
    let two_thirds = T::lit(2.0 / 3.0);
    let (older, newer): (Vec<T>, Vec<T>) = (0..n)
        .map(|j| {
            let sa = (T::from_usize_lossy(j) * h).sqrt();
            let sb = (T::from_usize_lossy(j + 1) * h).sqrt();
            let q = h / (sa + sb);
            let base = two_thirds * q * q / h * c;
            (base * (sb + sa + sa), base * (sb + sb + sa))
        })
        .unzip();

    let mut xi = Vec::with_capacity(n + 1);
    xi.push(T::one());
    for m in 1..=n {
        // Cell k = [t_k, t_{k+1}] has lag j = m - 1 - k.
        let mut acc = T::one();
        for k in 0..m {
            let j = m - 1 - k;
            acc = acc + older[j] * xi[k];
            if k + 1 < m {
                acc = acc + newer[j] * xi[k + 1];
            }
        }
        xi.push(acc / (T::one() - newer[0]));
    }
    XiCurve::new(times.to_vec(), xi, XiSource::VolterraOracle)
}

/// Uniform grid `0, h, ..., t_max` with `n` steps.
pub fn uniform_grid<T: Real>(t_max: T, n: usize) -> Vec<T> {
    let h = t_max / T::from_usize_lossy(n);
    (0..=n).map(|k| h * T::from_usize_lossy(k)).collect()
}

/// ξ estimated from the recorded window averages of `σ(u)²`, with per-path
/// standard errors.
pub fn estimate_xi(summary: &EnsembleSummary) -> Result<XiCurve<f64>, AnalysisError> {
    estimate_xi_from(summary, Halves::All)
}

pub fn estimate_xi_from(summary: &EnsembleSummary, which: Halves) -> Result<XiCurve<f64>, AnalysisError> {
    let layout = summary.layout();
    let halves: &[usize] = match which {
        Halves::All => &[0, 1],
        Halves::Even => &[0],
        Halves::Odd => &[1],
    };
    let n: u64 = halves.iter().map(|&h| summary.halves[h].count).sum();
    if layout.xi_steps.is_empty() || n == 0 {
        return Err(AnalysisError::NoXiData);
    }
    let nf = n as f64;
    let mut values = Vec::with_capacity(layout.xi_steps.len());
    let mut errors = Vec::with_capacity(layout.xi_steps.len());
    for k in 0..layout.xi_steps.len() {
        let (mut s, mut s2) = (ExactSum::new(), ExactSum::new());
        for &h in halves {
            s.merge(&summary.halves[h].xi[k]);
            s2.merge(&summary.halves[h].xi_sq[k]);
        }
        let mean = s.value() / nf;
        let var = if n > 1 {
            ((s2.value() / nf - mean * mean) * nf / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        values.push(mean);
        errors.push((var / nf).sqrt());
    }
    let times = layout.xi_steps.iter().map(|&s| summary.config.grid.time(s)).collect();
    let mut curve = XiCurve::new(times, values, XiSource::MonteCarlo)?;
    curve.std_errors = Some(errors);
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ξ(1) for the parabolic Anderson model, `e^{1/4}(1 + erf(1/2))`.
    const PAM_XI_AT_1: f64 = 1.952_360_489_182_557;
    /// `∫_0^1 ξ`, same model.
    const PAM_XI_INTEGRAL_TO_1: f64 = 1.552_683_622_539_203_5;

    #[test]
    fn constant_curve() {
        let c = XiCurve::constant(4.0_f64, 2.0);
        assert_eq!(c.eval(1.3), 4.0);
        assert_eq!(c.integral(0.0, 1.5).unwrap(), 6.0);
        assert!(c.integral(0.0, 2.5).is_err());
    }

    #[test]
    fn interpolation_and_integral() {
        let c = XiCurve::new(vec![0.0_f64, 1.0, 3.0], vec![1.0, 3.0, 3.0], XiSource::MonteCarlo).unwrap();
        assert_eq!(c.eval(0.5), 2.0);
        assert_eq!(c.eval(2.0), 3.0);
        assert!((c.integral(0.0, 3.0).unwrap() - 8.0).abs() < 1e-15);
        assert!((c.integral(0.5, 2.0).unwrap() - (1.25 + 3.0)).abs() < 1e-15);
        assert!(XiCurve::new(vec![0.0, 0.0], vec![1.0, 1.0], XiSource::Constant).is_err());
        assert!(XiCurve::new(vec![0.1, 1.0], vec![1.0, 1.0], XiSource::Constant).is_err());
        assert!(XiCurve::new(vec![0.0, 1.0], vec![1.0, -1.0], XiSource::Constant).is_err());
    }

    #[test]
    fn volterra_matches_closed_form() {
        let c = volterra_xi_pam(&uniform_grid(1.0_f64, 1000)).unwrap();
        assert_eq!(c.values[0], 1.0);
        assert!(c.values.windows(2).all(|w| w[1] > w[0]));
        let rel = (c.values[1000] - PAM_XI_AT_1).abs() / PAM_XI_AT_1;
        assert!(rel < 1e-5, "{rel}");
        let integral = c.integral(0.0, 1.0).unwrap();
        assert!((integral - PAM_XI_INTEGRAL_TO_1).abs() / PAM_XI_INTEGRAL_TO_1 < 1e-5);
        for (&t, &v) in c.times.iter().zip(&c.values).step_by(97) {
            let exact = (t / 4.0).exp() * (1.0 + libm::erf(t.sqrt() / 2.0));
            assert!((v - exact).abs() / exact < 2e-5, "t = {t}");
        }
    }

    #[test]
    fn volterra_refinement_and_extrapolation() {
        let a = volterra_xi_pam(&uniform_grid(1.0_f64, 1000)).unwrap().values[1000];
        let b = volterra_xi_pam(&uniform_grid(1.0_f64, 2000)).unwrap().values[2000];
        let c = volterra_xi_pam(&uniform_grid(1.0_f64, 4000)).unwrap().values[4000];
        assert!((a - b).abs() / b < 1e-4);
        // Observed order from three levels, then Richardson.
        let p = ((a - b) / (b - c)).log2();
        let extrapolated = c + (c - b) / (2f64.powf(p) - 1.0);
        assert!((extrapolated - PAM_XI_AT_1).abs() < 1e-6, "{extrapolated} (order {p})");
    }

    #[test]
    fn volterra_single_precision() {
        let c = volterra_xi_pam(&uniform_grid(1.0f32, 500)).unwrap();
        assert!((c.values[500] as f64 - PAM_XI_AT_1).abs() < 1e-3);
    }

    #[test]
    fn volterra_rejects_nonuniform_grid() {
        assert!(matches!(
            volterra_xi_pam(&[0.0, 0.1, 0.3]),
            Err(AnalysisError::NonUniformGrid)
        ));
    }
}
