//! The full acceptance suite: fixed preset ensembles, every criterion, and a
//! determinism check on reduced copies of the same ensembles.

use shelab_core::analysis::{estimate_xi, uniform_grid, volterra_xi_pam, XiCurve};
use shelab_core::ensemble::{digest, run_ensemble, EnsembleConfig, EnsembleSummary, DEFAULT_RESERVOIR_CAPACITY};
use shelab_core::simulate::{GridSpec, SigmaSpec};

use crate::config::{SigmaRMode, SuiteConfig};
use crate::evaluate::{
    cell_rows, f_samples, fdd_criterion, growth_criteria, ks_by_window, rate_criteria, tightness_criteria,
    variance_criteria, FDD_TOL_EXACT_XI, FDD_TOL_ORACLE_XI, VOLTERRA_STEPS,
};
use crate::kernels::verify_kernels;
use crate::plot::{heatmap_svg, histogram_svg, rate_svg};
use crate::report::{Bound, Criterion, Report};
use crate::run::{Artifacts, RunError, KERNEL_SEED};

pub const RATE_SEEDS: usize = 5;
pub const VOLTERRA_REFINEMENT_TOL: f64 = 1e-4;
pub const XI_ESTIMATE_TOL: f64 = 0.05;
pub const XI_CHECK_TIMES: [f64; 2] = [0.5, 1.0];
/// Worker counts compared by the determinism check.
pub const DETERMINISM_WORKERS: (usize, usize) = (1, 8);
pub const FDD_TIMES: [f64; 3] = [0.25, 0.5, 1.0];
pub const FDD_WINDOW: f64 = 16.0;
pub const SHARP_POINT: (f64, f64, f64) = (0.5, 1.0, 16.0);

/// Ensemble on `[0, T] × [-L, L]` with `dt = dx²/2`.
#[allow(clippy::too_many_arguments)]
pub fn preset(
    final_time: f64,
    dx: f64,
    half_width: f64,
    r_values: &[f64],
    times: &[f64],
    sigma: SigmaSpec,
    n_paths: u64,
    master_seed: u64,
) -> EnsembleConfig {
    let nx = (2.0 * half_width / dx).round() as usize;
    let nt = (final_time / (0.5 * dx * dx) - 1e-9).ceil() as usize;
    let max_window = *r_values.last().expect("non-empty");
    let grid = GridSpec::new(final_time, nt, half_width, nx, max_window).expect("preset grid is valid");
    EnsembleConfig {
        grid,
        sigma,
        n_paths,
        master_seed,
        observation_times: times.to_vec(),
        r_values: r_values.to_vec(),
        record_xi: true,
        xi_stride: (nt / 200).max(1),
        reservoir_capacity: DEFAULT_RESERVOIR_CAPACITY,
    }
}

/// The preset ensembles of the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct Presets {
    /// Additive noise on the fine grid: exact variance, normality, f.d.d.
    pub additive: EnsembleConfig,
    /// Parabolic Anderson model to t = 1: variance growth, f.d.d., tightness.
    pub anderson: EnsembleConfig,
    /// Parabolic Anderson model to t = 0.5, one ensemble per seed: CLT rate.
    pub rate: Vec<EnsembleConfig>,
    /// Parabolic Anderson model on a fine grid and small domain: ξ estimate.
    pub xi: EnsembleConfig,
}

/// Presets with their default path counts, each capped at `paths_cap`.
pub fn presets(seed: u64, paths_cap: Option<u64>) -> Presets {
    let cap = |n: u64| paths_cap.map_or(n, |c| n.min(c));
    let pam = SigmaSpec::anderson();
    Presets {
        additive: preset(
            1.0,
            0.05,
            22.0,
            &[4.0, 16.0],
            &FDD_TIMES,
            SigmaSpec::constant(1.0),
            cap(10_000),
            seed,
        ),
        anderson: preset(
            1.0,
            0.1,
            38.0,
            &[8.0, 16.0, 32.0],
            &[0.25, 0.5, 0.75, 1.0],
            pam,
            cap(200_000),
            seed,
        ),
        rate: (0..RATE_SEEDS as u64)
            .map(|k| {
                preset(
                    0.5,
                    0.1,
                    37.0,
                    &[4.0, 8.0, 16.0, 32.0],
                    &[0.5],
                    pam,
                    cap(10_000),
                    seed + k,
                )
            })
            .collect(),
        xi: preset(1.0, 0.05, 7.0, &[1.0], &XI_CHECK_TIMES, pam, cap(10_000), seed),
    }
}

/// Sets the criterion group of every entry pushed by `f`.
fn grouped<T>(report: &mut Report, group: u32, f: impl FnOnce(&mut Report) -> T) -> T {
    let start = report.criteria.len();
    let out = f(report);
    for c in &mut report.criteria[start..] {
        c.group = Some(group);
    }
    out
}

fn run_logged(
    name: &str,
    config: &EnsembleConfig,
    workers: usize,
    report: &mut Report,
) -> Result<EnsembleSummary, RunError> {
    log::info!("suite: ensemble {name}, {} paths", config.n_paths);
    let s = run_ensemble(config, workers)?;
    report.digests.insert(name.into(), format!("{:016x}", digest(&s)));
    Ok(s)
}

/// Every criterion except determinism, over the given presets.
pub fn evaluate_presets(
    p: &Presets,
    workers: usize,
    with_kernels: bool,
    plot: bool,
    report: &mut Report,
    artifacts: &mut Artifacts,
) -> Result<(), RunError> {
    if with_kernels {
        grouped(report, 1, |r| {
            verify_kernels(KERNEL_SEED).into_iter().for_each(|c| r.push(c))
        });
    }

    let additive = run_logged("additive", &p.additive, workers, report)?;
    let unit = XiCurve::constant(1.0, p.additive.grid.final_time);
    let rows = cell_rows(&additive, Some(&unit), SigmaRMode::ExactFormula);
    artifacts
        .rows
        .extend(rows.iter().cloned().map(|r| (Some("additive".to_string()), r)));
    let target: Vec<_> = rows.into_iter().filter(|r| r.half_width == 4.0 && r.t == 1.0).collect();
    grouped(report, 2, |r| variance_criteria(&target, true, r));
    grouped(report, 5, |r| {
        fdd_criterion(&additive, FDD_WINDOW, &FDD_TIMES, &unit, FDD_TOL_EXACT_XI, r)
    });
    if plot {
        if let Ok(f) = f_samples(&additive, 4.0, 1.0, SigmaRMode::ExactFormula, Some(&unit)) {
            artifacts.plots.push((
                "hist_additive_R4_t1.svg".into(),
                histogram_svg("F_R, additive noise, R = 4, t = 1", &f),
            ));
        }
    }
    drop(additive);

    let anderson = run_logged("anderson", &p.anderson, workers, report)?;
    let volterra = volterra_xi_pam(&uniform_grid(p.anderson.grid.final_time, VOLTERRA_STEPS))?;
    let rows = cell_rows(&anderson, Some(&volterra), SigmaRMode::ExactFormula);
    artifacts
        .rows
        .extend(rows.into_iter().map(|r| (Some("anderson".to_string()), r)));
    grouped(report, 3, |r| growth_criteria(&anderson, 1.0, &volterra, r));
    let fdd = grouped(report, 5, |r| {
        fdd_criterion(&anderson, FDD_WINDOW, &FDD_TIMES, &volterra, FDD_TOL_ORACLE_XI, r)
    });
    grouped(report, 6, |r| {
        tightness_criteria(&anderson, Some(&volterra), SHARP_POINT, r)
    });
    if let (true, Some(c)) = (plot, fdd) {
        let labels: Vec<String> = FDD_TIMES.iter().map(f64::to_string).collect();
        artifacts.plots.push((
            "fdd_cov_anderson_R16.svg".into(),
            heatmap_svg("Cov(G_R(s), G_R(t))/R, PAM, R = 16", &labels, &c.empirical.entries),
        ));
    }
    drop(anderson);

    let t_rate = p.rate[0].grid.final_time;
    let volterra_rate = volterra_xi_pam(&uniform_grid(t_rate, VOLTERRA_STEPS))?;
    let mut per_seed = Vec::new();
    for (k, cfg) in p.rate.iter().enumerate() {
        let s = run_logged(&format!("rate seed={}", cfg.master_seed), cfg, workers, report)?;
        if k == 0 {
            let rows = cell_rows(&s, Some(&volterra_rate), SigmaRMode::ExactFormula);
            artifacts.rows.extend(
                rows.into_iter()
                    .map(|r| (Some(format!("rate seed={}", cfg.master_seed)), r)),
            );
        }
        per_seed.push((
            cfg.master_seed,
            ks_by_window(&s, t_rate, SigmaRMode::ExactFormula, Some(&volterra_rate)),
        ));
    }
    let fit = grouped(report, 4, |r| rate_criteria(&per_seed, r));
    if let (true, Some(fit)) = (plot, fit) {
        artifacts.plots.push((
            "clt_rate.svg".into(),
            rate_svg(
                "KS distance of F_R vs R, PAM, t = 0.5",
                &fit.points,
                fit.slope,
                fit.intercept,
            ),
        ));
    }

    let xi_run = run_logged("xi", &p.xi, workers, report)?;
    grouped(report, 8, |r| xi_criteria(&xi_run, r));
    Ok(())
}

fn xi_criteria(summary: &EnsembleSummary, report: &mut Report) {
    let coarse = volterra_xi_pam(&uniform_grid(1.0_f64, VOLTERRA_STEPS));
    let fine = volterra_xi_pam(&uniform_grid(1.0_f64, 2 * VOLTERRA_STEPS));
    let (coarse, fine) = match (coarse, fine) {
        (Ok(c), Ok(f)) => (c, f),
        (Err(e), _) | (_, Err(e)) => {
            report.push(Criterion::failed(
                "volterra_refinement t=1",
                Bound::at_most(VOLTERRA_REFINEMENT_TOL),
                e.to_string(),
            ));
            return;
        }
    };
    let (a, b) = (coarse.eval(1.0), fine.eval(1.0));
    report.push(Criterion::new(
        "volterra_refinement t=1",
        (a - b).abs() / b,
        Bound::at_most(VOLTERRA_REFINEMENT_TOL),
        format!("ξ(1) = {a} with h = 1/{VOLTERRA_STEPS}, {b} with h/2"),
    ));
    match estimate_xi(summary) {
        Ok(est) => {
            for t in XI_CHECK_TIMES {
                let (e, o) = (est.eval(t), fine.eval(t));
                report.push(Criterion::new(
                    format!("xi_estimate t={t}"),
                    (e - o).abs() / o,
                    Bound::at_most(XI_ESTIMATE_TOL),
                    format!(
                        "Monte Carlo ξ({t}) = {e} over {} paths vs Volterra {o}",
                        summary.count()
                    ),
                ));
            }
        }
        Err(e) => {
            for t in XI_CHECK_TIMES {
                report.push(Criterion::failed(
                    format!("xi_estimate t={t}"),
                    Bound::at_most(XI_ESTIMATE_TOL),
                    e.to_string(),
                ));
            }
        }
    }
}

/// Runs the suite and appends the determinism check.
pub fn run_suite(
    suite: &SuiteConfig,
    workers: usize,
    plot: bool,
    report: &mut Report,
    artifacts: &mut Artifacts,
) -> Result<(), RunError> {
    evaluate_presets(
        &presets(suite.seed, suite.paths_cap),
        workers,
        true,
        plot,
        report,
        artifacts,
    )?;

    let small = presets(suite.seed, Some(suite.determinism_paths));
    let mut runs = Vec::new();
    for w in [DETERMINISM_WORKERS.0, DETERMINISM_WORKERS.1] {
        log::info!("suite: determinism run with {w} workers");
        let mut r = Report::new("full-suite", String::new());
        evaluate_presets(&small, w, false, false, &mut r, &mut Artifacts::default())?;
        runs.push(r);
    }
    let (one, many) = (&runs[0], &runs[1]);
    let digest_mismatches = one
        .digests
        .iter()
        .filter(|(k, v)| many.digests.get(*k) != Some(v))
        .count()
        + many.digests.len().abs_diff(one.digests.len());
    let verdict_mismatches = one
        .verdicts()
        .iter()
        .zip(many.verdicts())
        .filter(|(a, b)| **a != *b)
        .count()
        + one.criteria.len().abs_diff(many.criteria.len());
    let (w1, w2) = DETERMINISM_WORKERS;
    grouped(report, 7, |r| {
        r.push(Criterion::new(
            "determinism_digests",
            digest_mismatches as f64,
            Bound::at_most(0.0),
            format!(
                "summaries differing between {w1} and {w2} workers ({} ensembles of {} paths)",
                one.digests.len(),
                suite.determinism_paths
            ),
        ));
        r.push(Criterion::new(
            "determinism_verdicts",
            verdict_mismatches as f64,
            Bound::at_most(0.0),
            format!("criterion verdicts differing between {w1} and {w2} workers"),
        ));
    });
    Ok(())
}
