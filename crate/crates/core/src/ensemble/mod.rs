//! Deterministic, parallel Monte Carlo over many paths.
//!
//! Paths are grouped into fixed blocks of [`BLOCK_PATHS`] ids, each block is
//! simulated by one worker and reduced to a partial [`EnsembleSummary`], and
//! the partials are merged. All moment sums are exact ([`ExactSum`]) and the
//! reservoirs keep a hash-selected subset, so the merged summary does not
//! depend on the number of workers or on the reduction order.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::window_integral;
use crate::simulate::{integrate_path_with, GridSpec, SigmaSpec, SimulateError};

pub mod accum;
pub mod checkpoint;
pub mod reservoir;

pub use accum::ExactSum;
pub use checkpoint::{digest, read_checkpoint, read_checkpoint_for, write_checkpoint, CheckpointError};
pub use reservoir::{Reservoir, ReservoirEntry, DEFAULT_RESERVOIR_CAPACITY};

/// Paths per scheduling unit. Fixed so that block boundaries never depend on
/// the worker count.
pub const BLOCK_PATHS: u64 = 32;

/// Largest tolerated fraction of aborted (non-finite) paths.
pub const MAX_ABORT_FRACTION: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] SimulateError),
    #[error("{aborted} of {total} paths produced non-finite values (more than 0.1%)")]
    TooManyAborts {
        aborted: usize,
        total: u64,
        summary: Box<EnsembleSummary>,
    },
    #[error("summaries have different configuration fingerprints ({0:016x} vs {1:016x})")]
    FingerprintMismatch(u64, u64),
    #[error("summaries overlap on path ids {0}..{1}")]
    Overlap(u64, u64),
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub grid: GridSpec,
    pub sigma: SigmaSpec,
    pub n_paths: u64,
    pub master_seed: u64,
    /// Sorted, in `(0, T]`.
    pub observation_times: Vec<f64>,
    /// Sorted, in `(0, R_max]`.
    pub r_values: Vec<f64>,
    pub record_xi: bool,
    /// ξ is recorded every `xi_stride` time steps (and at the final step).
    pub xi_stride: usize,
    pub reservoir_capacity: usize,
}

/// Index bookkeeping derived from an [`EnsembleConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub observation_steps: Vec<usize>,
    pub xi_steps: Vec<usize>,
    /// Pairs `(i, j)`, `i < j`, of observation-time indices.
    pub pairs: Vec<(usize, usize)>,
    pub n_r: usize,
    pub n_t: usize,
}

impl Layout {
    pub fn cell(&self, r: usize, t: usize) -> usize {
        r * self.n_t + t
    }

    pub fn n_cells(&self) -> usize {
        self.n_r * self.n_t
    }

    pub fn pair_cell(&self, r: usize, pair: usize) -> usize {
        r * self.pairs.len() + pair
    }

    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.pairs.iter().position(|&p| p == key)
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        self.grid.validate()?;
        let bad = |m: String| Err(EnsembleError::Config(m));
        let t_max = self.grid.final_time;
        if self.observation_times.is_empty() {
            return bad("at least one observation time is required".into());
        }
        for w in self.observation_times.windows(2) {
            if !(w[0] < w[1]) {
                return bad(format!(
                    "observation times must be strictly increasing ({} then {})",
                    w[0], w[1]
                ));
            }
        }
        for &t in &self.observation_times {
            if !(t > 0.0 && t <= t_max * (1.0 + 1e-12)) {
                return bad(format!("observation time {t} outside (0, T = {t_max}]"));
            }
        }
        if self.r_values.is_empty() {
            return bad("at least one window half-width R is required".into());
        }
        for w in self.r_values.windows(2) {
            if !(w[0] < w[1]) {
                return bad(format!("R values must be strictly increasing ({} then {})", w[0], w[1]));
            }
        }
        for &r in &self.r_values {
            if !(r > 0.0 && r <= self.grid.max_window * (1.0 + 1e-12)) {
                return bad(format!("R = {r} outside (0, R_max = {}]", self.grid.max_window));
            }
        }
        if self.xi_stride == 0 {
            return bad("xi_stride must be at least 1".into());
        }
        if self.reservoir_capacity == 0 {
            return bad("reservoir capacity must be at least 1".into());
        }
        let steps = self.observation_steps()?;
        for w in steps.windows(2) {
            if w[0] == w[1] {
                return bad(format!("two observation times snap to the same step {}", w[0]));
            }
        }
        Ok(())
    }

    fn observation_steps(&self) -> Result<Vec<usize>, EnsembleError> {
        let mut steps = Vec::with_capacity(self.observation_times.len());
        for &t in &self.observation_times {
            let (step, snapped) = self.grid.step_for_time(t)?;
            if snapped {
                log::warn!(
                    "observation time {t} is off the time grid; using t = {}",
                    self.grid.time(step)
                );
            }
            steps.push(step);
        }
        Ok(steps)
    }

    pub fn layout(&self) -> Layout {
        let observation_steps = self.observation_steps().unwrap_or_default();
        let n_t = observation_steps.len();
        let xi_steps = if self.record_xi {
            let stride = self.xi_stride.max(1);
            let mut v: Vec<usize> = (0..=self.grid.nt).step_by(stride).collect();
            if *v.last().unwrap() != self.grid.nt {
                v.push(self.grid.nt);
            }
            v
        } else {
            Vec::new()
        };
        let pairs = (0..n_t).flat_map(|i| (i + 1..n_t).map(move |j| (i, j))).collect();
        Layout {
            observation_steps,
            xi_steps,
            pairs,
            n_r: self.r_values.len(),
            n_t,
        }
    }

    /// Hash of everything except `n_paths`, so that a run may be extended.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::Hasher;
        let mut canonical = self.clone();
        canonical.n_paths = 0;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        let mut h = fnv::FnvHasher::default();
        h.write(&bytes);
        h.finish()
    }

    /// Nodes `j` with `|x_j| <= L/2`, over which ξ is averaged.
    pub fn xi_window(&self) -> std::ops::RangeInclusive<usize> {
        let g = &self.grid;
        let quarter = g.nx / 4;
        quarter..=g.nx - quarter
    }
}

/// Moment sums over one half of the paths (even or odd path ids).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfMoments {
    pub count: u64,
    /// Per cell `(R, t)`: sums of `G`, `G²`, `G³`, `G⁴`.
    pub power: Vec<[ExactSum; 4]>,
    /// Per `(R, pair)`: sum of `G(t_i)·G(t_j)`.
    pub cross: Vec<ExactSum>,
    /// Per `(R, pair)`: sums of `(G(t_j) - G(t_i))²` and `(G(t_j) - G(t_i))⁴`.
    pub increment2: Vec<ExactSum>,
    pub increment4: Vec<ExactSum>,
    /// Per ξ step: sum over paths of the path's window mean of `σ(u)²`, and of
    /// its square.
    pub xi: Vec<ExactSum>,
    pub xi_sq: Vec<ExactSum>,
}

impl HalfMoments {
    fn empty(layout: &Layout) -> Self {
        let np = layout.n_r * layout.pairs.len();
        Self {
            count: 0,
            power: vec![[ExactSum::new(); 4]; layout.n_cells()],
            cross: vec![ExactSum::new(); np],
            increment2: vec![ExactSum::new(); np],
            increment4: vec![ExactSum::new(); np],
            xi: vec![ExactSum::new(); layout.xi_steps.len()],
            xi_sq: vec![ExactSum::new(); layout.xi_steps.len()],
        }
    }

    fn merge(&mut self, other: &HalfMoments) {
        self.count += other.count;
        for (a, b) in self.power.iter_mut().zip(&other.power) {
            for k in 0..4 {
                a[k].merge(&b[k]);
            }
        }
        for (mine, theirs) in [
            (&mut self.cross, &other.cross),
            (&mut self.increment2, &other.increment2),
            (&mut self.increment4, &other.increment4),
            (&mut self.xi, &other.xi),
            (&mut self.xi_sq, &other.xi_sq),
        ] {
            mine.iter_mut().zip(theirs).for_each(|(a, b)| a.merge(b));
        }
    }

    /// Every sum in a fixed order; used by the checkpoint format.
    pub(crate) fn sums_mut(&mut self) -> impl Iterator<Item = &mut ExactSum> {
        self.power
            .iter_mut()
            .flat_map(|p| p.iter_mut())
            .chain(self.cross.iter_mut())
            .chain(self.increment2.iter_mut())
            .chain(self.increment4.iter_mut())
            .chain(self.xi.iter_mut())
            .chain(self.xi_sq.iter_mut())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortedPath {
    pub path_id: u64,
    pub step: usize,
    pub node: usize,
}

/// Mergeable statistics of a set of paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub fingerprint: u64,
    pub config: EnsembleConfig,
    /// Disjoint, sorted, coalesced half-open ranges of simulated path ids.
    pub ranges: Vec<(u64, u64)>,
    pub aborted: Vec<AbortedPath>,
    /// Index 0 holds even path ids, index 1 odd ones.
    pub halves: [HalfMoments; 2],
    /// One reservoir of `G_R(t)` per cell `(R, t)`.
    pub reservoirs: Vec<Reservoir>,
}

/// Raw power sums of one cell, combined over the requested halves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMoments {
    pub n: u64,
    pub sums: [f64; 4],
}

impl CellMoments {
    pub fn mean(&self) -> f64 {
        self.sums[0] / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        (self.sums[1] - self.sums[0] * self.sums[0] / n) / (n - 1.0)
    }

    /// Central moment of order `k` (2, 3 or 4), biased.
    pub fn central(&self, k: usize) -> f64 {
        let n = self.n as f64;
        let m = self.mean();
        let e = |i: usize| self.sums[i - 1] / n;
        match k {
            2 => e(2) - m * m,
            3 => e(3) - 3.0 * m * e(2) + 2.0 * m.powi(3),
            4 => e(4) - 4.0 * m * e(3) + 6.0 * m * m * e(2) - 3.0 * m.powi(4),
            _ => panic!("unsupported central moment order {k}"),
        }
    }

    pub fn skewness(&self) -> f64 {
        self.central(3) / self.central(2).powf(1.5)
    }

    pub fn excess_kurtosis(&self) -> f64 {
        self.central(4) / self.central(2).powi(2) - 3.0
    }

    /// Standard error of the unbiased variance estimate.
    pub fn variance_standard_error(&self) -> f64 {
        let n = self.n as f64;
        let m2 = self.central(2);
        ((self.central(4) - m2 * m2 * (n - 3.0) / (n - 1.0)) / n)
            .max(0.0)
            .sqrt()
    }
}

/// Which paths to combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Halves {
    All,
    Even,
    Odd,
}

impl Halves {
    fn indices(self) -> &'static [usize] {
        match self {
            Halves::All => &[0, 1],
            Halves::Even => &[0],
            Halves::Odd => &[1],
        }
    }
}

impl EnsembleSummary {
    pub fn empty(config: &EnsembleConfig) -> Self {
        let layout = config.layout();
        let cells = layout.n_cells();
        Self {
            fingerprint: config.fingerprint(),
            config: config.clone(),
            ranges: Vec::new(),
            aborted: Vec::new(),
            halves: [HalfMoments::empty(&layout), HalfMoments::empty(&layout)],
            reservoirs: (0..cells)
                .map(|c| Reservoir::new(config.reservoir_capacity, config.master_seed, c as u64))
                .collect(),
        }
    }

    pub fn layout(&self) -> Layout {
        self.config.layout()
    }

    /// Paths that contributed (simulated and not aborted).
    pub fn count(&self) -> u64 {
        self.halves[0].count + self.halves[1].count
    }

    pub fn paths_attempted(&self) -> u64 {
        self.ranges.iter().map(|(a, b)| b - a).sum()
    }

    /// First path id not yet simulated, assuming the covered ids form a
    /// prefix `0..k`.
    pub fn next_path_id(&self) -> u64 {
        match self.ranges.first() {
            Some(&(0, end)) => end,
            _ => 0,
        }
    }

    pub fn cell_moments(&self, r: usize, t: usize, which: Halves) -> CellMoments {
        let cell = self.layout().cell(r, t);
        let mut n = 0;
        let mut sums = [ExactSum::new(); 4];
        for &h in which.indices() {
            n += self.halves[h].count;
            for (s, x) in sums.iter_mut().zip(&self.halves[h].power[cell]) {
                s.merge(x);
            }
        }
        CellMoments {
            n,
            sums: sums.map(|s| s.value()),
        }
    }

    /// Sample covariance of `G(t_i)` and `G(t_j)` at `R` index `r`.
    pub fn covariance(&self, r: usize, i: usize, j: usize, which: Halves) -> f64 {
        if i == j {
            return self.cell_moments(r, i, which).variance();
        }
        let layout = self.layout();
        let pair = layout.pair_index(i, j).expect("distinct time indices");
        let pc = layout.pair_cell(r, pair);
        let mut cross = ExactSum::new();
        let mut n = 0;
        for &h in which.indices() {
            cross.merge(&self.halves[h].cross[pc]);
            n += self.halves[h].count;
        }
        let (mi, mj) = (
            self.cell_moments(r, i, which).mean(),
            self.cell_moments(r, j, which).mean(),
        );
        let n = n as f64;
        (cross.value() - n * mi * mj) / (n - 1.0)
    }

    /// `(n, Σ ΔG², Σ ΔG⁴)` for the increment between time indices `i < j`.
    pub fn increment_sums(&self, r: usize, i: usize, j: usize, which: Halves) -> (u64, f64, f64) {
        let layout = self.layout();
        let pc = layout.pair_cell(r, layout.pair_index(i, j).expect("distinct time indices"));
        let (mut s2, mut s4, mut n) = (ExactSum::new(), ExactSum::new(), 0);
        for &h in which.indices() {
            s2.merge(&self.halves[h].increment2[pc]);
            s4.merge(&self.halves[h].increment4[pc]);
            n += self.halves[h].count;
        }
        (n, s2.value(), s4.value())
    }

    /// Merges a summary of a disjoint set of paths with the same configuration.
    pub fn merge(&mut self, other: &EnsembleSummary) -> Result<(), EnsembleError> {
        if self.fingerprint != other.fingerprint {
            return Err(EnsembleError::FingerprintMismatch(self.fingerprint, other.fingerprint));
        }
        for &(a0, a1) in &self.ranges {
            for &(b0, b1) in &other.ranges {
                if a0 < b1 && b0 < a1 {
                    return Err(EnsembleError::Overlap(a0.max(b0), a1.min(b1)));
                }
            }
        }
        self.merge_unchecked(other);
        if other.config.n_paths > self.config.n_paths {
            self.config.n_paths = other.config.n_paths;
        }
        Ok(())
    }

    fn merge_unchecked(&mut self, other: &EnsembleSummary) {
        self.ranges.extend_from_slice(&other.ranges);
        self.ranges = coalesce(std::mem::take(&mut self.ranges));
        self.aborted.extend_from_slice(&other.aborted);
        self.aborted.sort_by_key(|a| a.path_id);
        for (a, b) in self.halves.iter_mut().zip(&other.halves) {
            a.merge(b);
        }
        for (a, b) in self.reservoirs.iter_mut().zip(&other.reservoirs) {
            a.merge(b);
        }
    }

    fn absorb(&mut self, layout: &Layout, path_id: u64, g: &[f64], xi: &[f64]) {
        let half = &mut self.halves[(path_id % 2) as usize];
        half.count += 1;
        for (cell, &v) in g.iter().enumerate() {
            let p = &mut half.power[cell];
            let v2 = v * v;
            p[0].add(v);
            p[1].add(v2);
            p[2].add(v2 * v);
            p[3].add(v2 * v2);
            self.reservoirs[cell].offer(path_id, v);
        }
        for r in 0..layout.n_r {
            for (k, &(i, j)) in layout.pairs.iter().enumerate() {
                let (gi, gj) = (g[layout.cell(r, i)], g[layout.cell(r, j)]);
                let pc = layout.pair_cell(r, k);
                let d2 = (gj - gi) * (gj - gi);
                half.cross[pc].add(gi * gj);
                half.increment2[pc].add(d2);
                half.increment4[pc].add(d2 * d2);
            }
        }
        for (k, &x) in xi.iter().enumerate() {
            half.xi[k].add(x);
            half.xi_sq[k].add(x * x);
        }
    }
}

fn coalesce(mut ranges: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    ranges.retain(|r| r.1 > r.0);
    ranges.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(ranges.len());
    for r in ranges {
        match out.last_mut() {
            Some(last) if last.1 >= r.0 => last.1 = last.1.max(r.1),
            _ => out.push(r),
        }
    }
    out
}

/// Simulates one path and returns its `G_R(t)` values (cell order) and the
/// window means of `σ(u)²` at the ξ steps.
fn simulate_path(
    config: &EnsembleConfig,
    layout: &Layout,
    path_id: u64,
) -> Result<(Vec<f64>, Vec<f64>), SimulateError> {
    let grid = &config.grid;
    let mut g = vec![0.0; layout.n_cells()];
    let mut xi = Vec::with_capacity(layout.xi_steps.len());
    let (mut next_obs, mut next_xi) = (0, 0);
    let window = config.xi_window();
    let window_len = window.clone().count() as f64;
    integrate_path_with::<f64, _>(grid, &config.sigma, config.master_seed, path_id, |step, row| {
        if layout.observation_steps.get(next_obs) == Some(&step) {
            for (r, &half_width) in config.r_values.iter().enumerate() {
                g[layout.cell(r, next_obs)] = window_integral(row, grid, half_width);
            }
            next_obs += 1;
        }
        if layout.xi_steps.get(next_xi) == Some(&step) {
            let s: f64 = row[window.clone()]
                .iter()
                .map(|&u| {
                    let v = config.sigma.eval(u);
                    v * v
                })
                .sum();
            xi.push(s / window_len);
            next_xi += 1;
        }
    })?;
    Ok((g, xi))
}

fn simulate_block(config: &EnsembleConfig, layout: &Layout, ids: std::ops::Range<u64>) -> EnsembleSummary {
    let mut summary = EnsembleSummary::empty(config);
    summary.ranges.push((ids.start, ids.end));
    for id in ids {
        match simulate_path(config, layout, id) {
            Ok((g, xi)) => summary.absorb(layout, id, &g, &xi),
            Err(SimulateError::NonFinite { path_id, step, node }) => {
                log::warn!("path {path_id} aborted: non-finite value at step {step}, node {node}");
                summary.aborted.push(AbortedPath { path_id, step, node });
            }
            Err(e) => unreachable!("grid was validated before the run: {e}"),
        }
    }
    summary
}

/// Options for [`run_ensemble_with`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    pub workers: usize,
    /// Write a checkpoint here after every `checkpoint_every` paths.
    pub checkpoint: Option<&'a Path>,
    pub checkpoint_every: u64,
    /// Stop (with a checkpoint) once this many path ids are covered; used to
    /// emulate an interrupted run.
    pub stop_after: Option<u64>,
}

/// Summary over path ids `0..config.n_paths`.
pub fn run_ensemble(config: &EnsembleConfig, workers: usize) -> Result<EnsembleSummary, EnsembleError> {
    run_ensemble_with(
        config,
        &RunOptions {
            workers,
            ..RunOptions::default()
        },
        None,
    )
}

/// Summary over path ids `range`, without the abort-rate check.
pub fn run_ensemble_range(
    config: &EnsembleConfig,
    workers: usize,
    range: std::ops::Range<u64>,
) -> Result<EnsembleSummary, EnsembleError> {
    config.validate()?;
    let pool = build_pool(workers)?;
    Ok(run_chunk(&pool, config, range))
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, EnsembleError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EnsembleError::Pool(e.to_string()))
}

fn run_chunk(pool: &rayon::ThreadPool, config: &EnsembleConfig, range: std::ops::Range<u64>) -> EnsembleSummary {
    let layout = config.layout();
    let first_block = range.start / BLOCK_PATHS;
    let last_block = range.end.div_ceil(BLOCK_PATHS);
    let partial = pool.install(|| {
        (first_block..last_block)
            .into_par_iter()
            .map(|b| {
                let lo = (b * BLOCK_PATHS).max(range.start);
                let hi = ((b + 1) * BLOCK_PATHS).min(range.end);
                simulate_block(config, &layout, lo..hi)
            })
            .reduce_with(|mut a, b| {
                a.merge_unchecked(&b);
                a
            })
    });
    partial.unwrap_or_else(|| EnsembleSummary::empty(config))
}

/// Runs (or continues) an ensemble. With `resume_from`, path ids already
/// covered by that summary are skipped; its configuration must match.
pub fn run_ensemble_with(
    config: &EnsembleConfig,
    options: &RunOptions,
    resume_from: Option<EnsembleSummary>,
) -> Result<EnsembleSummary, EnsembleError> {
    config.validate()?;
    let pool = build_pool(options.workers)?;
    let mut summary = match resume_from {
        Some(s) => {
            if s.fingerprint != config.fingerprint() {
                return Err(EnsembleError::FingerprintMismatch(s.fingerprint, config.fingerprint()));
            }
            s
        }
        None => EnsembleSummary::empty(config),
    };
    summary.config.n_paths = config.n_paths;
    let target = match options.stop_after {
        Some(k) => k.min(config.n_paths),
        None => config.n_paths,
    };
    let chunk = if options.checkpoint.is_some() && options.checkpoint_every > 0 {
        options.checkpoint_every
    } else {
        u64::MAX
    };
    let mut next = summary.next_path_id();
    while next < target {
        let end = next.saturating_add(chunk).min(target);
        let part = run_chunk(&pool, config, next..end);
        summary.merge_unchecked(&part);
        next = end;
        if let Some(path) = options.checkpoint {
            write_checkpoint(&summary, path)?;
            log::info!("checkpoint: {next} of {} paths", config.n_paths);
        }
    }
    let attempted = summary.paths_attempted();
    if attempted > 0 && summary.aborted.len() as f64 > MAX_ABORT_FRACTION * attempted as f64 {
        return Err(EnsembleError::TooManyAborts {
            aborted: summary.aborted.len(),
            total: attempted,
            summary: Box::new(summary),
        });
    }
    Ok(summary)
}

/// JSON mirror of every moment field, with derived statistics alongside.
pub fn export_json(summary: &EnsembleSummary) -> serde_json::Value {
    use serde_json::json;
    let layout = summary.layout();
    let cfg = &summary.config;
    let mut cells = Vec::new();
    for (ri, &r) in cfg.r_values.iter().enumerate() {
        for (ti, &t) in cfg.observation_times.iter().enumerate() {
            let m = summary.cell_moments(ri, ti, Halves::All);
            cells.push(json!({
                "R": r, "t": t, "n": m.n,
                "sum": m.sums[0], "sum2": m.sums[1], "sum3": m.sums[2], "sum4": m.sums[3],
                "mean": m.mean(), "var": m.variance(),
                "reservoir_len": summary.reservoirs[layout.cell(ri, ti)].len(),
            }));
        }
    }
    let mut pairs = Vec::new();
    for (ri, &r) in cfg.r_values.iter().enumerate() {
        for &(i, j) in &layout.pairs {
            let (n, s2, s4) = summary.increment_sums(ri, i, j, Halves::All);
            pairs.push(json!({
                "R": r, "s": cfg.observation_times[i], "t": cfg.observation_times[j], "n": n,
                "cov": summary.covariance(ri, i, j, Halves::All),
                "increment_sum2": s2, "increment_sum4": s4,
            }));
        }
    }
    let xi: Vec<_> = layout
        .xi_steps
        .iter()
        .enumerate()
        .map(|(k, &step)| {
            let s: f64 = summary.halves.iter().map(|h| h.xi[k].value()).sum();
            let s2: f64 = summary.halves.iter().map(|h| h.xi_sq[k].value()).sum();
            json!({"t": cfg.grid.time(step), "sum": s, "sum_sq": s2})
        })
        .collect();
    json!({
        "fingerprint": format!("{:016x}", summary.fingerprint),
        "config": cfg,
        "ranges": summary.ranges,
        "count": summary.count(),
        "aborted": summary.aborted,
        "halves": summary.halves,
        "cells": cells,
        "pairs": pairs,
        "xi": xi,
    })
}
