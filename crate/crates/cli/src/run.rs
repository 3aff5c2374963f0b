//! Runs an experiment and writes its artifacts.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use shelab_core::analysis::{AnalysisError, XiCurve};
use shelab_core::ensemble::{
    digest, read_checkpoint_for, run_ensemble, run_ensemble_with, EnsembleConfig, EnsembleError, EnsembleSummary,
    RunOptions,
};
use shelab_core::simulate::integrate_path;
use thiserror::Error;

use crate::config::{parse_config, serialize_config, Body, ConfigError, ExperimentConfig, Kind, SimulationConfig};
use crate::evaluate::{
    cell_rows, check_nondegenerate, f_samples, fdd_criterion, growth_criteria, is_additive, ks_by_window, oracle_xi,
    rate_criteria, tightness_criteria, variance_criteria, CellRow, CSV_HEADER, FDD_TOL_EXACT_XI, FDD_TOL_ORACLE_XI,
};
use crate::kernels::verify_kernels;
use crate::plot::{heatmap_svg, histogram_svg, rate_svg};
use crate::report::{Bound, Criterion, Report};
use crate::suite::run_suite;

pub const CONFIG_FILE: &str = "experiment.conf";
pub const CHECKPOINT_FILE: &str = "checkpoint.shee";
pub const REPORT_FILE: &str = "report.json";
pub const RESULTS_FILE: &str = "results.csv";

/// Seed of the random evaluation points of the kernel checks.
pub const KERNEL_SEED: u64 = 1;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Runtime settings that do not change results.
#[derive(Debug, Clone, Default)]
pub struct RunSettings {
    pub workers: usize,
    /// Stop once this many paths are done, leaving a checkpoint behind.
    pub stop_after: Option<u64>,
    /// Also write the full field of this path id.
    pub dump_path: Option<u64>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("kind `{0}` runs several ensembles and cannot be resumed; rerun it instead")]
    NotResumable(Kind),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::NotResumable(_) => EXIT_CONFIG,
            RunError::Io { .. } => EXIT_IO,
            RunError::Analysis(_) => EXIT_FAIL,
            RunError::Ensemble(e) => match e {
                EnsembleError::Config(_) | EnsembleError::Grid(_) | EnsembleError::FingerprintMismatch(..) => {
                    EXIT_CONFIG
                }
                EnsembleError::Checkpoint(_) | EnsembleError::Pool(_) => EXIT_IO,
                EnsembleError::TooManyAborts { .. } | EnsembleError::Overlap(..) => EXIT_FAIL,
            },
        }
    }
}

pub(crate) fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Io { context, source }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Finished(Report),
    /// Interrupted on request; `resume` continues from the checkpoint.
    Stopped {
        covered: u64,
        total: u64,
        out: PathBuf,
    },
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Finished(r) if r.all_pass => EXIT_PASS,
            _ => EXIT_FAIL,
        }
    }
}

/// Artifacts collected by one experiment before they are written.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub rows: Vec<(Option<String>, CellRow)>,
    pub plots: Vec<(String, String)>,
}

pub fn run_experiment(config: &ExperimentConfig, settings: &RunSettings) -> Result<Outcome, RunError> {
    run_inner(config, settings, false)
}

/// Continues the single-ensemble experiment saved in `out`.
pub fn resume_experiment(out: &Path, settings: &RunSettings) -> Result<Outcome, RunError> {
    let mut config = parse_config(&out.join(CONFIG_FILE), None)?;
    if !config.kind.resumable() {
        return Err(RunError::NotResumable(config.kind));
    }
    config.out = out.to_path_buf();
    run_inner(&config, settings, true)
}

fn run_inner(config: &ExperimentConfig, settings: &RunSettings, resume: bool) -> Result<Outcome, RunError> {
    let out = &config.out;
    fs::create_dir_all(out).map_err(io_err(format!("cannot create {}", out.display())))?;
    let text = serialize_config(config);
    fs::write(out.join(CONFIG_FILE), &text).map_err(io_err("cannot write the configuration"))?;
    let mut report = Report::new(config.kind.name(), text);
    let mut artifacts = Artifacts::default();

    match &config.body {
        Body::Kernels => {
            for c in verify_kernels(KERNEL_SEED) {
                report.push(c);
            }
        }
        Body::Suite(suite) => {
            if settings.stop_after.is_some() || settings.dump_path.is_some() {
                report.warn("--stop-after and --dump-path apply to single-ensemble kinds only; ignored");
            }
            run_suite(suite, settings.workers, config.plot, &mut report, &mut artifacts)?;
        }
        Body::Simulation(sim) => {
            if let Some(id) = settings.dump_path {
                dump_path(&sim.ensemble, id, out)?;
            }
            if config.kind == Kind::CltRate {
                if settings.stop_after.is_some() {
                    report.warn("--stop-after applies to single-ensemble kinds only; ignored");
                }
                clt_rate(sim, settings.workers, config.plot, &mut report, &mut artifacts)?;
            } else {
                let Some(summary) = run_single(sim, out, settings, resume)? else {
                    let covered = read_checkpoint_for(&out.join(CHECKPOINT_FILE), &sim.ensemble)
                        .map(|s| s.next_path_id())
                        .unwrap_or(0);
                    return Ok(Outcome::Stopped {
                        covered,
                        total: sim.ensemble.n_paths,
                        out: out.clone(),
                    });
                };
                report
                    .digests
                    .insert("ensemble".into(), format!("{:016x}", digest(&summary)));
                single(config.kind, sim, &summary, config.plot, &mut report, &mut artifacts);
            }
        }
    }

    write_artifacts(out, &report, &artifacts)?;
    Ok(Outcome::Finished(report))
}

fn write_artifacts(out: &Path, report: &Report, artifacts: &Artifacts) -> Result<(), RunError> {
    fs::write(out.join(REPORT_FILE), report.to_json()).map_err(io_err("cannot write report.json"))?;
    if !artifacts.rows.is_empty() {
        let labelled = artifacts.rows.iter().any(|(l, _)| l.is_some());
        let path = out.join(RESULTS_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        let mut header: Vec<&str> = Vec::new();
        if labelled {
            header.push("run");
        }
        header.extend_from_slice(&CSV_HEADER);
        w.write_record(&header).map_err(|e| csv_err(&path, e))?;
        for (label, row) in &artifacts.rows {
            let mut rec: Vec<String> = Vec::new();
            if labelled {
                rec.push(label.clone().unwrap_or_default());
            }
            rec.extend(row.csv_fields());
            w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(io_err("cannot write results.csv"))?;
    }
    for (name, svg) in &artifacts.plots {
        fs::write(out.join(name), svg).map_err(io_err(format!("cannot write {name}")))?;
    }
    Ok(())
}

fn csv_err(path: &Path, e: csv::Error) -> RunError {
    RunError::Io {
        context: format!("cannot write {}", path.display()),
        source: io::Error::other(e),
    }
}

fn dump_path(config: &EnsembleConfig, id: u64, out: &Path) -> Result<(), RunError> {
    let field = integrate_path::<f64>(&config.grid, &config.sigma, config.master_seed, id)
        .map_err(|e| RunError::Ensemble(e.into()))?;
    let path = out.join(format!("path_{id}.she"));
    let file = fs::File::create(&path).map_err(io_err(format!("cannot create {}", path.display())))?;
    field
        .write_raw(io::BufWriter::new(file))
        .map_err(io_err(format!("cannot write {}", path.display())))?;
    log::info!("wrote path {id} to {}", path.display());
    Ok(())
}

/// Runs the ensemble of a single-ensemble kind; `None` if stopped early.
fn run_single(
    sim: &SimulationConfig,
    out: &Path,
    settings: &RunSettings,
    resume: bool,
) -> Result<Option<EnsembleSummary>, RunError> {
    let ckpt = out.join(CHECKPOINT_FILE);
    let resume_from = if resume {
        if !ckpt.exists() {
            return Err(RunError::Io {
                context: format!("cannot resume from {}", ckpt.display()),
                source: io::Error::new(io::ErrorKind::NotFound, "no checkpoint"),
            });
        }
        let s = read_checkpoint_for(&ckpt, &sim.ensemble).map_err(EnsembleError::from)?;
        log::info!("resuming at path {} of {}", s.next_path_id(), sim.ensemble.n_paths);
        Some(s)
    } else {
        None
    };
    let use_checkpoint = sim.checkpoint_every > 0 || settings.stop_after.is_some();
    let options = RunOptions {
        workers: settings.workers,
        checkpoint: use_checkpoint.then_some(ckpt.as_path()),
        checkpoint_every: sim.checkpoint_every,
        stop_after: settings.stop_after,
    };
    let summary = run_ensemble_with(&sim.ensemble, &options, resume_from)?;
    if summary.next_path_id() < sim.ensemble.n_paths {
        return Ok(None);
    }
    Ok(Some(summary))
}

fn xi_or_warn(sim: &SimulationConfig, summary: &EnsembleSummary, report: &mut Report) -> Option<XiCurve<f64>> {
    let e = &sim.ensemble;
    match oracle_xi(&e.sigma, e.grid.final_time, Some(summary)) {
        Ok(xi) => Some(xi),
        Err(err) => {
            report.warn(format!("no ξ available ({err}); set record_xi = true for this σ"));
            None
        }
    }
}

fn tag(x: f64) -> String {
    x.to_string().replace('.', "p")
}

fn single(
    kind: Kind,
    sim: &SimulationConfig,
    summary: &EnsembleSummary,
    plot: bool,
    report: &mut Report,
    artifacts: &mut Artifacts,
) {
    let e = &sim.ensemble;
    if e.sigma.eval(1.0_f64) == 0.0 {
        report.warn("σ(1) = 0: the solution stays at u ≡ 1 and σ_R = 0");
    }
    let xi = xi_or_warn(sim, summary, report);
    let rows = cell_rows(summary, xi.as_ref(), sim.sigma_r_mode);
    artifacts.rows.extend(rows.iter().cloned().map(|r| (None, r)));
    if !check_nondegenerate(&rows, report) {
        return;
    }
    let t_last = *e.observation_times.last().expect("validated");
    let r_last = *e.r_values.last().expect("validated");
    match kind {
        Kind::Variance => {
            variance_criteria(&rows, is_additive(&e.sigma), report);
            if let (Some(xi), true) = (&xi, e.r_values.len() >= 2) {
                growth_criteria(summary, t_last, xi, report);
            }
        }
        Kind::Fclt => {
            let r = sim.fdd_r.expect("resolved for fclt");
            let tol = if is_additive(&e.sigma) {
                FDD_TOL_EXACT_XI
            } else {
                FDD_TOL_ORACLE_XI
            };
            match &xi {
                Some(xi) => {
                    if let Some(c) = fdd_criterion(summary, r, &e.observation_times, xi, tol, report) {
                        if plot {
                            let labels: Vec<String> = e.observation_times.iter().map(f64::to_string).collect();
                            artifacts.plots.push((
                                format!("fdd_cov_R{}.svg", tag(r)),
                                heatmap_svg(
                                    &format!("Cov(G_R(s), G_R(t))/R, R = {r}"),
                                    &labels,
                                    &c.empirical.entries,
                                ),
                            ));
                        }
                    }
                }
                None => report.push(Criterion::failed(
                    format!("fdd_max_relative_error R={r}"),
                    Bound::at_most(tol),
                    "no ξ oracle",
                )),
            }
        }
        Kind::Tightness => {
            let p = sim.sharp.expect("resolved for tightness");
            tightness_criteria(summary, xi.as_ref(), (p.s, p.t, p.half_width), report);
        }
        _ => unreachable!("not a single-ensemble kind"),
    }
    if plot {
        if let Ok(f) = f_samples(summary, r_last, t_last, sim.sigma_r_mode, xi.as_ref()) {
            artifacts.plots.push((
                format!("hist_R{}_t{}.svg", tag(r_last), tag(t_last)),
                histogram_svg(&format!("F_R at R = {r_last}, t = {t_last}"), &f),
            ));
        }
    }
}

fn clt_rate(
    sim: &SimulationConfig,
    workers: usize,
    plot: bool,
    report: &mut Report,
    artifacts: &mut Artifacts,
) -> Result<(), RunError> {
    let seeds = sim.seeds.clone().unwrap_or_else(|| vec![sim.ensemble.master_seed]);
    let t = *sim.ensemble.observation_times.last().expect("validated");
    let mut per_seed = Vec::new();
    for (k, &seed) in seeds.iter().enumerate() {
        let mut cfg = sim.ensemble.clone();
        cfg.master_seed = seed;
        log::info!("clt-rate: seed {seed} ({} of {})", k + 1, seeds.len());
        let summary = run_ensemble(&cfg, workers)?;
        report
            .digests
            .insert(format!("seed={seed}"), format!("{:016x}", digest(&summary)));
        let xi = xi_or_warn(sim, &summary, report);
        if k == 0 {
            let rows = cell_rows(&summary, xi.as_ref(), sim.sigma_r_mode);
            artifacts.rows.extend(rows.iter().cloned().map(|r| (None, r)));
            if !check_nondegenerate(&rows, report) {
                return Ok(());
            }
            if plot {
                let r = *cfg.r_values.last().expect("validated");
                if let Ok(f) = f_samples(&summary, r, t, sim.sigma_r_mode, xi.as_ref()) {
                    artifacts.plots.push((
                        format!("hist_R{}_t{}.svg", tag(r), tag(t)),
                        histogram_svg(&format!("F_R at R = {r}, t = {t}, seed {seed}"), &f),
                    ));
                }
            }
        }
        per_seed.push((seed, ks_by_window(&summary, t, sim.sigma_r_mode, xi.as_ref())));
    }
    if let Some(fit) = rate_criteria(&per_seed, report) {
        if plot {
            artifacts.plots.push((
                "clt_rate.svg".into(),
                rate_svg(
                    &format!("KS distance of F_R vs R, t = {t}"),
                    &fit.points,
                    fit.slope,
                    fit.intercept,
                ),
            ));
        }
    }
    Ok(())
}
