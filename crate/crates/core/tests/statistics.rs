use proptest::prelude::*;
use shelab_core::ensemble::{run_ensemble, EnsembleConfig, Halves};
use shelab_core::simulate::{integrate_path_with, GridSpec, SigmaKind, SigmaSpec};

/// Additive noise, σ ≡ 1: Var u(t, x) = ∫_0^t (4π(t-s))^{-1/2} ds = √(t/π).
#[test]
fn additive_point_variance_matches_the_mild_form() {
    let grid = GridSpec::new(1.0, 200, 7.0, 140, 1.0).unwrap();
    let sigma = SigmaSpec::constant(1.0);
    let centre = grid.nx / 2;
    let n = 4000;
    let mut values = Vec::with_capacity(n);
    for id in 0..n as u64 {
        let mut last = 0.0;
        integrate_path_with(&grid, &sigma, 11, id, |step, row: &[f64]| {
            if step == grid.nt {
                last = row[centre];
            }
        })
        .unwrap();
        values.push(last);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let exact = (1.0 / std::f64::consts::PI).sqrt();
    assert!((var - exact).abs() / exact < 0.10, "var {var} vs {exact}");
    // standard error of the mean is about 0.012
    assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
}

/// The exact power sums of a summary against Welford updates
/// on the same (fully retained) samples.
#[test]
fn exact_sums_agree_with_welford() {
    let grid = GridSpec::new(0.25, 200, 5.0, 200, 2.0).unwrap();
    let config = EnsembleConfig {
        grid,
        sigma: SigmaSpec::anderson(),
        n_paths: 1000,
        master_seed: 5,
        observation_times: vec![0.25],
        r_values: vec![2.0],
        record_xi: false,
        xi_stride: 1,
        reservoir_capacity: 1000,
    };
    let summary = run_ensemble(&config, 2).unwrap();
    let samples: Vec<f64> = summary.reservoirs[0]
        .values_by_path()
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    assert_eq!(samples.len(), 1000);

    let (mut count, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for &x in &samples {
        count += 1.0;
        let d = x - mean;
        mean += d / count;
        m2 += d * (x - mean);
    }
    let welford_var = m2 / (count - 1.0);
    let m = summary.cell_moments(0, 0, Halves::All);
    assert_eq!(m.n, 1000);
    assert!(
        (m.mean() - mean).abs() <= 1e-10 * welford_var.sqrt(),
        "{} vs {mean}",
        m.mean()
    );
    assert!(
        (m.variance() - welford_var).abs() <= 1e-10 * welford_var,
        "{} vs {welford_var}",
        m.variance()
    );
}

fn sigma_kind() -> impl Strategy<Value = SigmaKind> {
    prop_oneof![
        (-3.0f64..3.0).prop_map(|c| SigmaKind::Constant { c }),
        Just(SigmaKind::Linear),
        (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| SigmaKind::Affine { a, b }),
        Just(SigmaKind::Sine),
    ]
}

proptest! {
    #[test]
    fn sigma_respects_its_lipschitz_bound(kind in sigma_kind(), u in -50.0f64..50.0, v in -50.0f64..50.0, extra in 0.0f64..3.0) {
        let spec = SigmaSpec::with_lipschitz_bound(kind, kind.minimal_lipschitz() + extra).unwrap();
        let gap = (spec.eval(u) - spec.eval(v)).abs();
        prop_assert!(gap <= spec.lipschitz_bound * (u - v).abs() * (1.0 + 1e-12) + 1e-12);
        if kind.minimal_lipschitz() > 0.0 {
            prop_assert!(SigmaSpec::with_lipschitz_bound(kind, kind.minimal_lipschitz() * 0.99).is_err());
        }
    }
}
