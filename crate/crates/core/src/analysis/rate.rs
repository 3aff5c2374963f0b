//! Log-log least squares for the decay of a distance in `R`.

use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fits `log d = intercept + slope · log R`.
pub fn clt_rate_fit(points: &[(f64, f64)]) -> Result<RateFit, AnalysisError> {
    for &(r, d) in points {
        if !(d > 0.0 && d.is_finite()) {
            return Err(AnalysisError::InvalidArgument(format!(
                "distance at R = {r} must be positive, got {d}"
            )));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(AnalysisError::InvalidArgument(format!("R must be positive, got {r}")));
        }
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(AnalysisError::InsufficientData(
            "rate fit needs at least three distinct R".into(),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit {
        points: points.to_vec(),
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let pts: Vec<_> = [4.0, 8.0, 16.0, 32.0]
            .iter()
            .map(|&r: &f64| (r, r.powf(-0.5)))
            .collect();
        let fit = clt_rate_fit(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let flat: Vec<_> = [1.0, 2.0, 3.0].iter().map(|&r| (r, 0.3)).collect();
        let fit = clt_rate_fit(&flat).unwrap();
        assert!(fit.slope.abs() < 1e-15);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(clt_rate_fit(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(clt_rate_fit(&[(1.0, 1.0), (1.0, 0.5), (2.0, 1.0)]).is_err());
    }
}
