//! Distance of a sample to the standard normal law, and normalization of
//! `G_R(t)` to `F_R(t) = G_R(t)/σ_R`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::ensemble::{EnsembleSummary, ExactSum, Halves};

use super::covariance::index_of;
use super::AnalysisError;

pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub n: usize,
    /// Kolmogorov–Smirnov statistic against `Φ`.
    pub ks: f64,
    /// Wasserstein-1 distance to `N(0, 1)`.
    pub w1: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// 95% critical value of the one-sample KS statistic, `1.36/√n`.
pub fn ks_band_95(n: usize) -> f64 {
    1.36 / (n as f64).sqrt()
}

pub fn normality_stats(samples: &[f64]) -> Result<NormalityReport, AnalysisError> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(AnalysisError::InsufficientData(format!(
            "{n} samples, need at least {MIN_SAMPLES}"
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::NonFiniteSample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let nf = n as f64;

    let mut ks: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal.cdf(x);
        ks = ks.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }

    // Quantile coupling: sample i is matched with the normal mass between the
    // quantiles z_{i-1} = Φ⁻¹((i-1)/n) and z_i = Φ⁻¹(i/n).
    let quantile = |i: usize| -> f64 {
        match i {
            0 => f64::NEG_INFINITY,
            i if i == n => f64::INFINITY,
            i => normal.inverse_cdf(i as f64 / nf),
        }
    };
    let pdf = |z: f64| if z.is_finite() { normal.pdf(z) } else { 0.0 };
    let cdf = |z: f64| normal.cdf(z);
    // ∫_a^b (x - z) φ(z) dz
    let below = |x: f64, a: f64, b: f64| x * (cdf(b) - cdf(a)) + pdf(b) - pdf(a);
    let mut w1 = ExactSum::new();
    let mut lo = quantile(0);
    for (i, &x) in sorted.iter().enumerate() {
        let hi = quantile(i + 1);
        let part = if x <= lo {
            -below(x, lo, hi)
        } else if x >= hi {
            below(x, lo, hi)
        } else {
            below(x, lo, x) - below(x, x, hi)
        };
        w1.add(part);
        lo = hi;
    }

    let mut s = ExactSum::new();
    samples.iter().for_each(|&x| s.add(x));
    let mean = s.value() / nf;
    let (mut c2, mut c3, mut c4) = (ExactSum::new(), ExactSum::new(), ExactSum::new());
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        c2.add(d2);
        c3.add(d2 * d);
        c4.add(d2 * d2);
    }
    let m2 = c2.value() / nf;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (c3.value() / nf / m2.powf(1.5), c4.value() / nf / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };

    Ok(NormalityReport {
        n,
        ks: ks.clamp(0.0, 1.0),
        w1: w1.value().max(0.0),
        skewness,
        excess_kurtosis,
    })
}

/// Where `σ_R` for the normalization comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// A value supplied by the caller, e.g. from the exact finite-R formula.
    Given(f64),
    /// Cross-fitted halves: even path ids are scaled by the sample standard
    /// deviation of the odd ones and vice versa.
    SplitSample,
}

fn cell_indices(summary: &EnsembleSummary, half_width: f64, t: f64) -> Result<(usize, usize), AnalysisError> {
    let cfg = &summary.config;
    let r = index_of(&cfg.r_values, half_width).ok_or(AnalysisError::MissingWindow(half_width))?;
    let ti = index_of(&cfg.observation_times, t).ok_or(AnalysisError::MissingTime(t))?;
    Ok((r, ti))
}

/// `F_R(t)` samples from the reservoir of cell `(R, t)`, ordered by path id.
pub fn normalize_f(
    summary: &EnsembleSummary,
    half_width: f64,
    t: f64,
    mode: SigmaMode,
) -> Result<Vec<f64>, AnalysisError> {
    let (r, ti) = cell_indices(summary, half_width, t)?;
    let reservoir = &summary.reservoirs[summary.layout().cell(r, ti)];
    if reservoir.is_empty() {
        return Err(AnalysisError::InsufficientData("empty reservoir".into()));
    }
    let samples = reservoir.values_by_path();
    match mode {
        SigmaMode::Given(sigma) => {
            check_sigma(sigma)?;
            Ok(samples.iter().map(|&(_, g)| g / sigma).collect())
        }
        SigmaMode::SplitSample => {
            let sd = |h: Halves| {
                let m = summary.cell_moments(r, ti, h);
                if m.n < 2 {
                    return Err(AnalysisError::InsufficientData(
                        "a split half has fewer than two paths".into(),
                    ));
                }
                let sigma = m.variance().max(0.0).sqrt();
                check_sigma(sigma)?;
                Ok(sigma)
            };
            let (even, odd) = (sd(Halves::Even)?, sd(Halves::Odd)?);
            Ok(samples
                .iter()
                .map(|&(id, g)| if id % 2 == 0 { g / odd } else { g / even })
                .collect())
        }
    }
}

fn check_sigma(sigma: f64) -> Result<(), AnalysisError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(AnalysisError::DegenerateVariance(sigma));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::derive_stream;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = derive_stream(seed, 0).rng();
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn exact_normals_stay_inside_the_band() {
        let x = normals(1, 100_000);
        let r = normality_stats(&x).unwrap();
        assert!(r.ks <= ks_band_95(r.n), "{}", r.ks);
        assert!(r.w1 < 0.02);
        assert!(r.skewness.abs() < 0.05 && r.excess_kurtosis.abs() < 0.1);
    }

    #[test]
    fn band_holds_on_most_seeds() {
        let inside = (0..100)
            .filter(|&s| {
                let x = normals(1000 + s, 2000);
                normality_stats(&x).unwrap().ks <= ks_band_95(x.len())
            })
            .count();
        // 95% coverage per seed; 88 is the 0.1% quantile of Bin(100, 0.95).
        assert!(inside >= 88, "{inside}");
    }

    #[test]
    fn point_mass_and_shift() {
        let r = normality_stats(&vec![0.0; 500]).unwrap();
        assert_eq!(r.ks, 0.5);
        assert!((r.w1 - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-3);
        assert_eq!((r.skewness, r.excess_kurtosis), (0.0, 0.0));
        let shifted: Vec<f64> = normals(2, 50_000).iter().map(|x| x + 1.0).collect();
        let r = normality_stats(&shifted).unwrap();
        assert!((r.w1 - 1.0).abs() < 0.02, "{}", r.w1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(normality_stats(&[0.0; 10]).is_err());
        let mut x = normals(3, 200);
        x[7] = f64::NAN;
        assert!(matches!(normality_stats(&x), Err(AnalysisError::NonFiniteSample)));
        assert!(matches!(check_sigma(0.0), Err(AnalysisError::DegenerateVariance(_))));
    }
}
