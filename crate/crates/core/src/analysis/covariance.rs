//! Exact and limiting covariances of `G_R`, and the Gaussian limit process.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSummary, Halves};
use crate::quadrature::{Integrator, QuadratureResult};
use crate::real::Real;
use crate::simulate::derive_stream;

use super::xi::XiCurve;
use super::AnalysisError;

/// Pivot floor of the PSD check, relative to the largest diagonal entry.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// `∫_0^{2R} p_a(z) (2R - z) dz = R·erf(2R/√(2a)) - √(a/2π)(1 - e^{-2R²/a})`.
pub fn window_kernel<T: Real>(a: T, half_width: T) -> T {
    if a <= T::zero() {
        return half_width;
    }
    let two = T::lit(2.0);
    let r = half_width;
    r * (two * r / (two * a).sqrt()).erf() + (a / (two * T::PI())).sqrt() * (-(two * r * r / a)).exp_m1()
}

/// `Cov(G_R(t), G_R(s)) = 2 ∫_0^{s∧t} ξ(r) ∫_0^{2R} p_{t+s-2r}(z)(2R - z) dz dr`.
pub fn exact_covariance_finite_r<T: Real>(
    t: T,
    s: T,
    half_width: T,
    xi: &XiCurve<T>,
) -> Result<QuadratureResult<T>, AnalysisError> {
    if !(t >= T::zero() && s >= T::zero()) {
        return Err(AnalysisError::InvalidArgument(format!(
            "times must be non-negative (t = {t}, s = {s})"
        )));
    }
    if !(half_width > T::zero()) {
        return Err(AnalysisError::InvalidArgument(format!(
            "R must be positive, got {half_width}"
        )));
    }
    let m = t.min(s);
    xi.ensure_covers(m)?;
    if m == T::zero() {
        return Ok(QuadratureResult::zero());
    }
    let two = T::lit(2.0);
    let f = |r: T| xi.eval(r) * window_kernel(t + s - two * r, half_width);
    let mut q = Integrator::new(T::lit(1e-13), T::lit(1e-11)).integrate_with_breaks(f, &xi.breakpoints(T::zero(), m));
    q.value = two * q.value;
    q.abs_error_estimate = two * q.abs_error_estimate;
    Ok(q)
}

/// `2 ∫_0^t ξ`, the limit of `σ_R²/R`.
pub fn asymptotic_variance<T: Real>(t: T, xi: &XiCurve<T>) -> Result<T, AnalysisError> {
    Ok(T::lit(2.0) * xi.integral(T::zero(), t)?)
}

/// Covariance matrix of the limit process at `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovMatrix {
    pub times: Vec<f64>,
    pub entries: Vec<Vec<f64>>,
}

impl CovMatrix {
    pub fn dim(&self) -> usize {
        self.times.len()
    }

    /// Lower-triangular `L` with `L Lᵀ = C`, allowing zero pivots.
    ///
    /// Fails when a pivot falls below `-PSD_TOLERANCE · max diag`.
    pub fn cholesky(&self) -> Result<Vec<Vec<f64>>, AnalysisError> {
        let n = self.dim();
        let scale = (0..n)
            .map(|i| self.entries[i][i].abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut l = vec![vec![0.0; n]; n];
        for j in 0..n {
            let pivot = self.entries[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
            if pivot < -PSD_TOLERANCE * scale {
                return Err(AnalysisError::NotPsd { pivot, index: j });
            }
            let d = pivot.max(0.0).sqrt();
            l[j][j] = d;
            for i in j + 1..n {
                let v = self.entries[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                l[i][j] = if d > 0.0 { v / d } else { 0.0 };
            }
        }
        Ok(l)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| self.entries[i][j] == self.entries[j][i]))
    }
}

/// `C[i][j] = 2 ∫_0^{t_i ∧ t_j} ξ(r) dr`.
pub fn fdd_covariance(times: &[f64], xi: &XiCurve<f64>) -> Result<CovMatrix, AnalysisError> {
    let diag = times
        .iter()
        .map(|&t| asymptotic_variance(t, xi))
        .collect::<Result<Vec<_>, _>>()?;
    let n = times.len();
    let entries = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if times[i] <= times[j] { diag[i] } else { diag[j] })
                .collect()
        })
        .collect();
    let c = CovMatrix {
        times: times.to_vec(),
        entries,
    };
    c.cholesky()?;
    Ok(c)
}

/// `n` draws of `(∫_0^{t_k} √(2ξ) dB)_k`, i.e. centred Gaussian vectors with
/// covariance [`fdd_covariance`].
pub fn simulate_limit_process(
    xi: &XiCurve<f64>,
    times: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let l = fdd_covariance(times, xi)?.cholesky()?;
    let mut rng = derive_stream(seed, u64::MAX).rng();
    let m = times.len();
    let mut z = vec![0.0; m];
    Ok((0..n)
        .map(|_| {
            z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
            (0..m).map(|i| (0..=i).map(|k| l[i][k] * z[k]).sum()).collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FddComparison {
    pub half_width: f64,
    /// Empirical covariance of `G_R(t_i)/√R`.
    pub empirical: CovMatrix,
    pub predicted: CovMatrix,
    pub max_relative_error: f64,
}

/// Compares the empirical covariance of `G_R(t_i)/√R` at the window
/// `half_width` with [`fdd_covariance`].
pub fn fdd_compare(
    summary: &EnsembleSummary,
    half_width: f64,
    times: &[f64],
    xi: &XiCurve<f64>,
) -> Result<FddComparison, AnalysisError> {
    let cfg = &summary.config;
    let r = index_of(&cfg.r_values, half_width).ok_or(AnalysisError::MissingWindow(half_width))?;
    let idx = times
        .iter()
        .map(|&t| index_of(&cfg.observation_times, t).ok_or(AnalysisError::MissingTime(t)))
        .collect::<Result<Vec<_>, _>>()?;
    if summary.count() < 2 {
        return Err(AnalysisError::InsufficientData("fewer than two paths".into()));
    }
    let predicted = fdd_covariance(times, xi)?;
    let n = times.len();
    let empirical = CovMatrix {
        times: times.to_vec(),
        entries: (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| summary.covariance(r, idx[i], idx[j], Halves::All) / half_width)
                    .collect()
            })
            .collect(),
    };
    let eps = 1e-12;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = predicted.entries[i][j];
            worst = worst.max((empirical.entries[i][j] - c).abs() / c.abs().max(eps));
        }
    }
    Ok(FddComparison {
        half_width,
        empirical,
        predicted,
        max_relative_error: worst,
    })
}

pub(crate) fn index_of(values: &[f64], x: f64) -> Option<usize> {
    values.iter().position(|&v| (v - x).abs() <= 1e-9 * v.abs().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::xi::{uniform_grid, volterra_xi_pam};

    #[test]
    fn window_kernel_limits() {
        assert_eq!(window_kernel(0.0, 3.0), 3.0);
        // Tiny a: I(a) ≈ R - √(a/2π).
        let a = 1e-8;
        assert!((window_kernel(a, 2.0) - (2.0 - (a / (2.0 * std::f64::consts::PI)).sqrt())).abs() < 1e-12);
        // Direct quadrature of the defining integral.
        let (a, r) = (1.7, 1.3);
        let direct = Integrator::<f64>::default()
            .integrate(
                |z| (-(z * z) / (2.0 * a)).exp() / (2.0 * std::f64::consts::PI * a).sqrt() * (2.0 * r - z),
                0.0,
                2.0 * r,
            )
            .value;
        assert!((window_kernel(a, r) - direct).abs() < 1e-13);
    }

    #[test]
    fn constant_xi_finite_r_against_midpoint_rule() {
        let xi = XiCurve::constant(1.0_f64, 1.0);
        let adaptive = exact_covariance_finite_r(1.0, 1.0, 4.0, &xi).unwrap();
        assert!(adaptive.converged);
        // Independent evaluation: r = 1 - v² removes the endpoint square root,
        // then a plain midpoint rule.
        let n = 40_000;
        let h = 1.0 / n as f64;
        let midpoint: f64 = (0..n)
            .map(|k| {
                let v = (k as f64 + 0.5) * h;
                2.0 * v * window_kernel(2.0 * v * v, 4.0)
            })
            .sum::<f64>()
            * h
            * 2.0;
        assert!(
            (adaptive.value - midpoint).abs() / midpoint < 1e-6,
            "{} vs {midpoint}",
            adaptive.value
        );
        assert!((adaptive.value / 4.0 - 1.812).abs() < 1e-3);
    }

    #[test]
    fn finite_r_approaches_the_limit() {
        let xi = XiCurve::constant(1.0_f64, 1.0);
        let limit = asymptotic_variance(1.0, &xi).unwrap();
        assert_eq!(limit, 2.0);
        let mut prev = 0.0;
        for r in [4.0, 8.0, 16.0, 32.0, 64.0] {
            let v = exact_covariance_finite_r(1.0, 1.0, r, &xi).unwrap().value / r;
            assert!(v > prev && v < limit);
            prev = v;
        }
        assert!((limit - prev) / limit < 0.02);
        assert_eq!(exact_covariance_finite_r(0.0, 1.0, 4.0, &xi).unwrap().value, 0.0);
        let tiny = exact_covariance_finite_r(1e-9, 1.0, 4.0, &xi).unwrap().value;
        assert!(tiny.abs() < 1e-7);
    }

    #[test]
    fn pam_finite_r_values() {
        let xi = volterra_xi_pam(&uniform_grid(1.0_f64, 2000)).unwrap();
        let limit = asymptotic_variance(1.0, &xi).unwrap();
        assert!((limit - 3.105_367_245_078_407).abs() < 1e-4);
        let r32 = exact_covariance_finite_r(1.0, 1.0, 32.0, &xi).unwrap().value / 32.0;
        let r64 = exact_covariance_finite_r(1.0, 1.0, 64.0, &xi).unwrap().value / 64.0;
        assert!((r64 - r32) / r64 < 0.02);
        assert!((r32 - 3.071).abs() < 2e-3, "{r32}");
    }

    #[test]
    fn fdd_matrix_structure() {
        let c = fdd_covariance(&[0.25, 0.5, 1.0], &XiCurve::constant(1.0, 1.0)).unwrap();
        assert_eq!(
            c.entries,
            vec![vec![0.5, 0.5, 0.5], vec![0.5, 1.0, 1.0], vec![0.5, 1.0, 2.0]]
        );
        assert!(c.is_symmetric());
        let one = fdd_covariance(&[0.7], &XiCurve::constant(2.0_f64, 1.0)).unwrap();
        assert!((one.entries[0][0] - asymptotic_variance(0.7, &XiCurve::constant(2.0, 1.0)).unwrap()).abs() < 1e-15);
        let pam = volterra_xi_pam(&uniform_grid(1.0_f64, 1000)).unwrap();
        let c = fdd_covariance(&[0.25, 0.5, 1.0], &pam).unwrap();
        assert!(c.cholesky().unwrap().iter().enumerate().all(|(i, row)| row[i] > 0.0));
        let bad = CovMatrix {
            times: vec![0.0, 1.0],
            entries: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        };
        assert!(matches!(bad.cholesky(), Err(AnalysisError::NotPsd { .. })));
    }

    #[test]
    fn limit_process_sampler() {
        let xi = XiCurve::constant(1.0_f64, 1.0);
        let n = 100_000;
        let draws = simulate_limit_process(&xi, &[1.0], n, 3).unwrap();
        let var = draws.iter().map(|v| v[0] * v[0]).sum::<f64>() / n as f64;
        assert!((var / 2.0 - 1.0).abs() < 0.03, "{var}");
        assert_eq!(draws, simulate_limit_process(&xi, &[1.0], n, 3).unwrap());

        let times = [0.25, 0.5, 1.0];
        let c = fdd_covariance(&times, &xi).unwrap();
        let draws = simulate_limit_process(&xi, &times, 20_000, 8).unwrap();
        let nf = draws.len() as f64;
        for i in 0..3 {
            for j in 0..3 {
                let emp = draws.iter().map(|v| v[i] * v[j]).sum::<f64>() / nf;
                // Var(X_i X_j) = C_ii C_jj + C_ij² for centred Gaussians.
                let se = ((c.entries[i][i] * c.entries[j][j] + c.entries[i][j].powi(2)) / nf).sqrt();
                assert!((emp - c.entries[i][j]).abs() < 4.0 * se, "({i},{j})");
            }
        }
    }
}
