//! Experiment configuration: flat `key = value` text.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated.
//! Unknown keys, repeated keys and keys that the experiment kind does not use
//! are errors. Command-line overrides are applied on top of the file.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `kind` | experiment kind | the subcommand |
//! | `out` | output directory | `out` |
//! | `plot` | write SVG plots | `false` |
//! | `T` | final time | per kind |
//! | `dt` or `nt` | time step or number of steps | `dt = dx²/2`, rounded down to divide `T` |
//! | `dx` or `nx` | space step or number of intervals on `[-L, L]` | `dx = 0.1` (per kind) |
//! | `L` | domain half-width | `R_max + 6√T`, rounded up to a multiple of `dx/2` |
//! | `R` | window half-widths | per kind |
//! | `R_max` | largest window | `max(R)` |
//! | `times` | observation times | per kind |
//! | `sigma` | `constant`, `linear`, `affine` or `sine` | per kind |
//! | `sigma_c` | constant value | `1` |
//! | `sigma_a`, `sigma_b` | affine `a + b·u` | `0`, `1` |
//! | `lipschitz` | Lipschitz bound of σ | minimal for σ |
//! | `paths` | Monte Carlo paths | per kind |
//! | `seed` | master seed | `1` |
//! | `seeds` | master seeds (clt-rate) | `1, 2, 3, 4, 5` |
//! | `sigma_R_mode` | `exact-formula` or `split-sample` | `exact-formula` |
//! | `record_xi` | accumulate `σ(u)²` for ξ | `true` |
//! | `xi_stride` | ξ recorded every this many steps | `max(1, nt/200)` |
//! | `reservoir` | retained samples per cell | `65536` |
//! | `checkpoint_every` | paths between checkpoints, 0 = off | `4096` |
//! | `fdd_R` | window of the f.d.d. comparison (fclt) | `16` if listed, else `max(R)` |
//! | `sharp_s`, `sharp_t`, `sharp_R` | sharp p = 2 check (tightness) | `0.5`, `T`, middle `R` |
//! | `determinism_paths` | paths of the repeated runs (full-suite) | `256` |
//!
//! For `full-suite`, `paths` caps the path count of every preset ensemble.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use shelab_core::ensemble::{EnsembleConfig, DEFAULT_RESERVOIR_CAPACITY};
use shelab_core::simulate::{GridSpec, SigmaKind, SigmaSpec, SimulateError};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    VerifyKernels,
    Variance,
    CltRate,
    Fclt,
    Tightness,
    FullSuite,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::VerifyKernels,
        Kind::Variance,
        Kind::CltRate,
        Kind::Fclt,
        Kind::Tightness,
        Kind::FullSuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::VerifyKernels => "verify-kernels",
            Kind::Variance => "variance",
            Kind::CltRate => "clt-rate",
            Kind::Fclt => "fclt",
            Kind::Tightness => "tightness",
            Kind::FullSuite => "full-suite",
        }
    }

    /// Kinds that run one ensemble and can therefore be resumed.
    pub fn resumable(self) -> bool {
        matches!(self, Kind::Variance | Kind::Fclt | Kind::Tightness)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment kind `{s}` (expected one of {})", kind_list()))
    }
}

fn kind_list() -> String {
    Kind::ALL.map(Kind::name).join(", ")
}

/// How `σ_R` is obtained when normalizing `G_R` to `F_R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaRMode {
    /// The exact finite-R covariance formula with the oracle ξ.
    ExactFormula,
    /// Cross-fitted sample standard deviations of the two path halves.
    SplitSample,
}

impl SigmaRMode {
    fn name(self) -> &'static str {
        match self {
            SigmaRMode::ExactFormula => "exact-formula",
            SigmaRMode::SplitSample => "split-sample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpPoint {
    pub s: f64,
    pub t: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub ensemble: EnsembleConfig,
    pub sigma_r_mode: SigmaRMode,
    pub checkpoint_every: u64,
    /// clt-rate only; the first seed is the primary one.
    pub seeds: Option<Vec<u64>>,
    /// fclt only.
    pub fdd_r: Option<f64>,
    /// tightness only.
    pub sharp: Option<SharpPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub paths_cap: Option<u64>,
    pub determinism_paths: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)]
pub enum Body {
    Kernels,
    Simulation(SimulationConfig),
    Suite(SuiteConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub out: PathBuf,
    pub plot: bool,
    pub body: Body,
}

impl ExperimentConfig {
    pub fn simulation(&self) -> Option<&SimulationConfig> {
        match &self.body {
            Body::Simulation(s) => Some(s),
            _ => None,
        }
    }
}

/// Where a value came from, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub origin: Option<Origin>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.origin {
            Some(Origin::Line(l)) => write!(f, "line {l}: ")?,
            Some(Origin::Flag) => write!(f, "command line: ")?,
            None => {}
        }
        if let Some(field) = &self.field {
            write!(f, "field `{field}`: ")?;
        }
        f.write_str(&self.message)
    }
}

/// `key = value` pairs with their origin, in input order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, (Origin, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError {
                    origin: Some(Origin::Line(line_no)),
                    field: None,
                    message: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = key.trim().to_string();
            if let Some((Origin::Line(first), _)) = raw.entries.get(&key) {
                return Err(ConfigError {
                    origin: Some(Origin::Line(line_no)),
                    field: Some(key.clone()),
                    message: format!("repeated key (first set on line {first})"),
                });
            }
            raw.entries
                .insert(key, (Origin::Line(line_no), value.trim().to_string()));
        }
        Ok(raw)
    }

    /// Sets `key` from the command line, replacing any file value.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (Origin::Flag, value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }
}

const COMMON_KEYS: &[&str] = &["kind", "out", "plot"];
const SIMULATION_KEYS: &[&str] = &[
    "T",
    "dt",
    "nt",
    "dx",
    "nx",
    "L",
    "R",
    "R_max",
    "times",
    "sigma",
    "sigma_c",
    "sigma_a",
    "sigma_b",
    "lipschitz",
    "paths",
    "seed",
    "sigma_R_mode",
    "record_xi",
    "xi_stride",
    "reservoir",
    "checkpoint_every",
];
const SUITE_KEYS: &[&str] = &["seed", "paths", "determinism_paths"];

fn kind_keys(kind: Kind) -> Vec<&'static str> {
    let mut keys = COMMON_KEYS.to_vec();
    match kind {
        Kind::VerifyKernels => {}
        Kind::FullSuite => keys.extend_from_slice(SUITE_KEYS),
        _ => {
            keys.extend_from_slice(SIMULATION_KEYS);
            match kind {
                Kind::CltRate => keys.push("seeds"),
                Kind::Fclt => keys.push("fdd_R"),
                Kind::Tightness => keys.extend_from_slice(&["sharp_s", "sharp_t", "sharp_R"]),
                _ => {}
            }
        }
    }
    keys
}

fn all_keys() -> Vec<&'static str> {
    let mut keys: Vec<&str> = Kind::ALL.into_iter().flat_map(kind_keys).collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

/// Per-kind defaults, applied to keys the file does not set.
struct KindDefaults {
    final_time: f64,
    dx: f64,
    r: &'static [f64],
    times: &'static [f64],
    sigma: &'static str,
    paths: u64,
}

fn kind_defaults(kind: Kind) -> KindDefaults {
    match kind {
        Kind::Variance => KindDefaults {
            final_time: 1.0,
            dx: 0.05,
            r: &[4.0],
            times: &[1.0],
            sigma: "constant",
            paths: 10_000,
        },
        Kind::CltRate => KindDefaults {
            final_time: 0.5,
            dx: 0.1,
            r: &[4.0, 8.0, 16.0, 32.0],
            times: &[0.5],
            sigma: "linear",
            paths: 10_000,
        },
        Kind::Fclt => KindDefaults {
            final_time: 1.0,
            dx: 0.1,
            r: &[16.0],
            times: &[0.25, 0.5, 1.0],
            sigma: "linear",
            paths: 20_000,
        },
        _ => KindDefaults {
            final_time: 1.0,
            dx: 0.1,
            r: &[8.0, 16.0, 32.0],
            times: &[0.25, 0.5, 0.75, 1.0],
            sigma: "linear",
            paths: 20_000,
        },
    }
}

pub const DEFAULT_CHECKPOINT_EVERY: u64 = 4096;
pub const DEFAULT_DETERMINISM_PATHS: u64 = 256;
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Resolver<'a> {
    raw: &'a RawConfig,
}

impl Resolver<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            origin: self.raw.entries.get(key).map(|(o, _)| *o),
            field: Some(key.to_string()),
            message: message.into(),
        }
    }

    fn value<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.raw.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(key, format!("expected {what}, got `{v}`"))),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.value(key, "a number")?;
        if let Some(x) = v {
            if !x.is_finite() {
                return Err(self.err(key, format!("must be finite, got {x}")));
            }
        }
        Ok(v)
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v = self.float(key)?;
        if let Some(x) = v {
            if x <= 0.0 {
                return Err(self.err(key, format!("must satisfy {key} > 0, got {x}")));
            }
        }
        Ok(v)
    }

    fn count(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.value(key, "a non-negative integer")
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.raw.get(key) {
            None => Ok(None),
            Some("true" | "yes" | "1") => Ok(Some(true)),
            Some("false" | "no" | "0") => Ok(Some(false)),
            Some(v) => Err(self.err(key, format!("expected true or false, got `{v}`"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(v) = self.raw.get(key) else {
            return Ok(None);
        };
        let items = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| self.err(key, format!("expected a list of {what}, got `{s}`")))
            })
            .collect::<Result<Vec<T>, _>>()?;
        if items.is_empty() {
            return Err(self.err(key, "list is empty"));
        }
        Ok(Some(items))
    }

    fn increasing(&self, key: &str, values: &[f64]) -> Result<(), ConfigError> {
        for &v in values {
            if !(v.is_finite() && v > 0.0) {
                return Err(self.err(key, format!("entries must be finite and > 0, got {v}")));
            }
        }
        for w in values.windows(2) {
            if w[0] >= w[1] || w[0].is_nan() || w[1].is_nan() {
                return Err(self.err(
                    key,
                    format!("entries must be strictly increasing ({} then {})", w[0], w[1]),
                ));
            }
        }
        Ok(())
    }
}

/// Parses a configuration file. `kind_hint` (the subcommand) is used when the
/// file has no `kind` key and must agree with it otherwise.
pub fn parse_config(path: &Path, kind_hint: Option<Kind>) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        origin: None,
        field: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    resolve(&RawConfig::parse(&text)?, kind_hint)
}

pub fn parse_config_str(text: &str, kind_hint: Option<Kind>) -> Result<ExperimentConfig, ConfigError> {
    resolve(&RawConfig::parse(text)?, kind_hint)
}

/// Validates `raw`, injects defaults and checks the grid invariants.
pub fn resolve(raw: &RawConfig, kind_hint: Option<Kind>) -> Result<ExperimentConfig, ConfigError> {
    let r = Resolver { raw };
    let kind = match (r.value::<String>("kind", "a kind")?, kind_hint) {
        (Some(k), hint) => {
            let k: Kind = k.parse().map_err(|m: String| r.err("kind", m))?;
            if let Some(h) = hint {
                if h != k {
                    return Err(r.err("kind", format!("file declares kind `{k}` but `{h}` was requested")));
                }
            }
            k
        }
        (None, Some(h)) => h,
        (None, None) => {
            return Err(ConfigError {
                origin: None,
                field: Some("kind".into()),
                message: format!("missing; expected one of {}", kind_list()),
            })
        }
    };
    let known = all_keys();
    let allowed = kind_keys(kind);
    for (key, (origin, _)) in &raw.entries {
        if !known.contains(&key.as_str()) {
            return Err(ConfigError {
                origin: Some(*origin),
                field: Some(key.clone()),
                message: "unknown key".into(),
            });
        }
        if !allowed.contains(&key.as_str()) {
            return Err(ConfigError {
                origin: Some(*origin),
                field: Some(key.clone()),
                message: format!("not used by kind `{kind}`"),
            });
        }
    }
    let out = PathBuf::from(r.value::<String>("out", "a path")?.unwrap_or_else(|| "out".into()));
    let plot = r.boolean("plot")?.unwrap_or(false);
    let body = match kind {
        Kind::VerifyKernels => Body::Kernels,
        Kind::FullSuite => Body::Suite(SuiteConfig {
            seed: r.count("seed")?.unwrap_or(1),
            paths_cap: match r.count("paths")? {
                Some(0) => return Err(r.err("paths", "must satisfy paths >= 1")),
                p => p,
            },
            determinism_paths: match r.count("determinism_paths")?.unwrap_or(DEFAULT_DETERMINISM_PATHS) {
                0 => return Err(r.err("determinism_paths", "must satisfy determinism_paths >= 1")),
                p => p,
            },
        }),
        _ => Body::Simulation(resolve_simulation(&r, kind)?),
    };
    Ok(ExperimentConfig { kind, out, plot, body })
}

fn resolve_simulation(r: &Resolver, kind: Kind) -> Result<SimulationConfig, ConfigError> {
    let d = kind_defaults(kind);
    let final_time = r.positive("T")?.unwrap_or(d.final_time);

    let r_values = r.list::<f64>("R", "numbers")?.unwrap_or_else(|| d.r.to_vec());
    r.increasing("R", &r_values)?;
    let r_max_default = *r_values.last().expect("non-empty");
    let max_window = r.positive("R_max")?.unwrap_or(r_max_default);
    if max_window < r_max_default {
        return Err(r.err("R_max", format!("R_max = {max_window} < max(R) = {r_max_default}")));
    }

    let times = r.list::<f64>("times", "numbers")?.unwrap_or_else(|| {
        if r.raw.get("T").is_some() {
            vec![final_time]
        } else {
            d.times.to_vec()
        }
    });
    r.increasing("times", &times)?;
    if let Some(&last) = times.last() {
        if last > final_time * (1.0 + 1e-12) {
            return Err(r.err("times", format!("observation time {last} > T = {final_time}")));
        }
    }

    // Space grid.
    let (half_width, nx) = match (r.positive("dx")?, r.count("nx")?) {
        (Some(_), Some(_)) => return Err(r.err("nx", "set either dx or nx, not both")),
        (None, Some(nx)) => {
            let Some(l) = r.positive("L")? else {
                return Err(r.err("nx", "nx needs an explicit L"));
            };
            (l, nx as usize)
        }
        (dx, None) => {
            let dx = dx.unwrap_or(d.dx);
            match r.positive("L")? {
                Some(l) => {
                    let cells = 2.0 * l / dx;
                    if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
                        return Err(r.err("dx", format!("2L/dx must be an integer, got 2·{l}/{dx} = {cells}")));
                    }
                    (l, cells.round() as usize)
                }
                None => {
                    let required = GridSpec::required_half_width(max_window, final_time);
                    let cells = (2.0 * required / dx - 1e-9).ceil();
                    let l = cells * dx / 2.0;
                    log::info!(
                        "L not set; using L = {l} (R_max + 6·√T = {required}, rounded up to a multiple of dx/2)"
                    );
                    (l, cells as usize)
                }
            }
        }
    };
    let dx = 2.0 * half_width / nx.max(1) as f64;

    // Time grid.
    let nt = match (r.positive("dt")?, r.count("nt")?) {
        (Some(_), Some(_)) => return Err(r.err("nt", "set either dt or nt, not both")),
        (None, Some(nt)) => nt as usize,
        (Some(dt), None) => {
            let steps = final_time / dt;
            if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                return Err(r.err(
                    "dt",
                    format!("T/dt must be an integer, got {final_time}/{dt} = {steps}"),
                ));
            }
            steps.round() as usize
        }
        (None, None) => (final_time / (0.5 * dx * dx) - 1e-9).ceil() as usize,
    };

    let grid = GridSpec {
        final_time,
        nt,
        half_width,
        nx,
        max_window,
    };
    grid.validate().map_err(|e| {
        let key = match e {
            SimulateError::Unstable { .. } => ["dt", "nt", "dx", "nx"]
                .into_iter()
                .find(|k| r.raw.get(k).is_some())
                .unwrap_or("dt"),
            SimulateError::DomainTooSmall { .. } => "L",
            SimulateError::TooCoarse { what, .. } => what,
            _ => "T",
        };
        r.err(key, e.to_string())
    })?;

    let sigma_name = r
        .value::<String>("sigma", "a σ name")?
        .unwrap_or_else(|| d.sigma.into());
    let kind_sigma = match sigma_name.as_str() {
        "constant" => {
            forbid(r, &["sigma_a", "sigma_b"], "sigma = constant")?;
            SigmaKind::Constant {
                c: r.float("sigma_c")?.unwrap_or(1.0),
            }
        }
        "linear" => {
            forbid(r, &["sigma_a", "sigma_b", "sigma_c"], "sigma = linear")?;
            SigmaKind::Linear
        }
        "affine" => {
            forbid(r, &["sigma_c"], "sigma = affine")?;
            SigmaKind::Affine {
                a: r.float("sigma_a")?.unwrap_or(0.0),
                b: r.float("sigma_b")?.unwrap_or(1.0),
            }
        }
        "sine" => {
            forbid(r, &["sigma_a", "sigma_b", "sigma_c"], "sigma = sine")?;
            SigmaKind::Sine
        }
        other => {
            return Err(r.err(
                "sigma",
                format!("unknown σ `{other}` (expected constant, linear, affine or sine)"),
            ))
        }
    };
    let sigma = match r.float("lipschitz")? {
        Some(l) => SigmaSpec::with_lipschitz_bound(kind_sigma, l).map_err(|e| r.err("lipschitz", e.to_string()))?,
        None => SigmaSpec::new(kind_sigma),
    };
    if sigma.eval(1.0_f64) == 0.0 {
        log::warn!("σ(1) = 0: the solution stays at u ≡ 1, so σ_R = 0 and F_R is undefined");
    }

    let n_paths = r.count("paths")?.unwrap_or(d.paths);
    if n_paths == 0 {
        return Err(r.err("paths", "must satisfy paths >= 1"));
    }
    let master_seed = r.count("seed")?.unwrap_or(1);
    let sigma_r_mode = match r.raw.get("sigma_R_mode") {
        None | Some("exact-formula") => SigmaRMode::ExactFormula,
        Some("split-sample") => SigmaRMode::SplitSample,
        Some(v) => {
            return Err(r.err(
                "sigma_R_mode",
                format!("expected exact-formula or split-sample, got `{v}`"),
            ))
        }
    };
    let record_xi = r.boolean("record_xi")?.unwrap_or(true);
    let xi_stride = match r.count("xi_stride")? {
        Some(0) => return Err(r.err("xi_stride", "must satisfy xi_stride >= 1")),
        Some(s) => s as usize,
        None => (nt / 200).max(1),
    };
    let reservoir_capacity = match r.count("reservoir")? {
        Some(0) => return Err(r.err("reservoir", "must satisfy reservoir >= 1")),
        Some(c) => c as usize,
        None => DEFAULT_RESERVOIR_CAPACITY,
    };
    let checkpoint_every = r.count("checkpoint_every")?.unwrap_or(DEFAULT_CHECKPOINT_EVERY);

    let ensemble = EnsembleConfig {
        grid,
        sigma,
        n_paths,
        master_seed,
        observation_times: times.clone(),
        r_values: r_values.clone(),
        record_xi,
        xi_stride,
        reservoir_capacity,
    };
    ensemble.validate().map_err(|e| r.err("times", e.to_string()))?;

    let listed = |key: &str, v: f64, values: &[f64], what: &str| -> Result<f64, ConfigError> {
        if values.iter().any(|&x| (x - v).abs() <= 1e-12 * v.abs().max(1.0)) {
            Ok(v)
        } else {
            Err(r.err(key, format!("{v} is not one of the configured {what} {values:?}")))
        }
    };
    let seeds = match kind {
        Kind::CltRate => {
            let seeds = r
                .list::<u64>("seeds", "integers")?
                .unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
            if r_values.len() < 3 {
                return Err(r.err("R", "clt-rate needs at least three R values for the slope fit"));
            }
            Some(seeds)
        }
        _ => None,
    };
    let fdd_r = match kind {
        Kind::Fclt => {
            let default = if r_values.contains(&16.0) { 16.0 } else { r_max_default };
            Some(listed(
                "fdd_R",
                r.positive("fdd_R")?.unwrap_or(default),
                &r_values,
                "R values",
            )?)
        }
        _ => None,
    };
    let sharp = match kind {
        Kind::Tightness => {
            if times.len() < 2 {
                return Err(r.err("times", "tightness needs at least two observation times"));
            }
            let t = listed(
                "sharp_t",
                r.positive("sharp_t")?.unwrap_or(*times.last().unwrap()),
                &times,
                "times",
            )?;
            let s = r
                .positive("sharp_s")?
                .unwrap_or(if times.contains(&0.5) && t > 0.5 { 0.5 } else { times[0] });
            let s = listed("sharp_s", s, &times, "times")?;
            if s >= t {
                return Err(r.err("sharp_s", format!("need sharp_s < sharp_t, got {s} >= {t}")));
            }
            let half_width = listed(
                "sharp_R",
                r.positive("sharp_R")?.unwrap_or(r_values[r_values.len() / 2]),
                &r_values,
                "R values",
            )?;
            Some(SharpPoint { s, t, half_width })
        }
        _ => None,
    };

    Ok(SimulationConfig {
        ensemble,
        sigma_r_mode,
        checkpoint_every,
        seeds,
        fdd_r,
        sharp,
    })
}

fn forbid(r: &Resolver, keys: &[&str], context: &str) -> Result<(), ConfigError> {
    match keys.iter().find(|k| r.raw.get(k).is_some()) {
        Some(k) => Err(r.err(k, format!("not used with {context}"))),
        None => Ok(()),
    }
}

fn join<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

/// Text form with every default made explicit; parsing it gives back `config`.
pub fn serialize_config(config: &ExperimentConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("kind", config.kind.to_string());
    kv("out", config.out.display().to_string());
    kv("plot", config.plot.to_string());
    match &config.body {
        Body::Kernels => {}
        Body::Suite(suite) => {
            kv("seed", suite.seed.to_string());
            if let Some(p) = suite.paths_cap {
                kv("paths", p.to_string());
            }
            kv("determinism_paths", suite.determinism_paths.to_string());
        }
        Body::Simulation(sim) => {
            let e = &sim.ensemble;
            let g = &e.grid;
            kv("T", g.final_time.to_string());
            kv("nt", g.nt.to_string());
            kv("L", g.half_width.to_string());
            kv("nx", g.nx.to_string());
            kv("R", join(&e.r_values));
            kv("R_max", g.max_window.to_string());
            kv("times", join(&e.observation_times));
            match e.sigma.kind {
                SigmaKind::Constant { c } => {
                    kv("sigma", "constant".into());
                    kv("sigma_c", c.to_string());
                }
                SigmaKind::Linear => kv("sigma", "linear".into()),
                SigmaKind::Affine { a, b } => {
                    kv("sigma", "affine".into());
                    kv("sigma_a", a.to_string());
                    kv("sigma_b", b.to_string());
                }
                SigmaKind::Sine => kv("sigma", "sine".into()),
            }
            kv("lipschitz", e.sigma.lipschitz_bound.to_string());
            kv("paths", e.n_paths.to_string());
            kv("seed", e.master_seed.to_string());
            kv("sigma_R_mode", sim.sigma_r_mode.name().into());
            kv("record_xi", e.record_xi.to_string());
            kv("xi_stride", e.xi_stride.to_string());
            kv("reservoir", e.reservoir_capacity.to_string());
            kv("checkpoint_every", sim.checkpoint_every.to_string());
            if let Some(seeds) = &sim.seeds {
                kv("seeds", join(seeds));
            }
            if let Some(r) = sim.fdd_r {
                kv("fdd_R", r.to_string());
            }
            if let Some(p) = sim.sharp {
                kv("sharp_s", p.s.to_string());
                kv("sharp_t", p.t.to_string());
                kv("sharp_R", p.half_width.to_string());
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        parse_config_str(text, None)
    }

    #[test]
    fn omitted_l_defaults_to_localization_margin() {
        let c = parse("kind = variance\nT = 1\ndx = 0.1\nR = 4\n").unwrap();
        let g = c.simulation().unwrap().ensemble.grid;
        assert!((g.half_width - 10.0).abs() < 1e-12);
        assert_eq!(g.nx, 200);
        // dt defaults to the stability limit dx²/2.
        assert_eq!(g.nt, 200);
        let c = parse("kind = variance\nT = 0.5\ndx = 0.1\nR = 4\n").unwrap();
        let g = c.simulation().unwrap().ensemble.grid;
        assert!(g.half_width >= 4.0 + 6.0 * 0.5_f64.sqrt());
        assert!(g.half_width - (4.0 + 6.0 * 0.5_f64.sqrt()) < 0.05 + 1e-12);
        assert!((2.0 * g.half_width / g.dx() - g.nx as f64).abs() < 1e-9);
    }

    #[test]
    fn unstable_dt_names_the_inequality() {
        let e = parse("kind = variance\ndx = 0.1\ndt = 0.01\nR = 4\n").unwrap_err();
        assert_eq!(e.field.as_deref(), Some("dt"));
        assert_eq!(e.origin, Some(Origin::Line(3)));
        assert!(e.to_string().contains("dt <= dx²/2"), "{e}");
    }

    #[test]
    fn small_domain_names_the_inequality() {
        let e = parse("kind = variance\nL = 8\nR = 4\n").unwrap_err();
        assert_eq!(e.field.as_deref(), Some("L"));
        assert!(e.to_string().contains("L >= R_max + 6·√T"), "{e}");
    }

    #[test]
    fn unknown_and_misplaced_keys_are_rejected() {
        let e = parse("kind = variance\nfoo = 1\n").unwrap_err();
        assert_eq!((e.origin, e.field.as_deref()), (Some(Origin::Line(2)), Some("foo")));
        let e = parse("kind = variance\nseeds = 1, 2\n").unwrap_err();
        assert!(e.to_string().contains("not used by kind"), "{e}");
        let e = parse("kind = verify-kernels\nT = 1\n").unwrap_err();
        assert_eq!(e.field.as_deref(), Some("T"));
        let e = parse("kind = variance\nR = 4\nR = 5\n").unwrap_err();
        assert!(e.to_string().contains("repeated"), "{e}");
        let e = parse("kind = variance\njust words\n").unwrap_err();
        assert_eq!(e.origin, Some(Origin::Line(2)));
        assert!(parse("R = 4\n").is_err());
        assert!(parse_config_str("kind = fclt\n", Some(Kind::Variance)).is_err());
    }

    #[test]
    fn typed_values_are_checked() {
        for bad in [
            "paths = many",
            "R = 4, x",
            "plot = maybe",
            "T = -1",
            "sigma = cubic",
            "times = 0.5, 0.25",
        ] {
            let text = format!("kind = variance\n{bad}\n");
            let e = parse(&text).unwrap_err();
            assert_eq!(e.origin, Some(Origin::Line(2)), "{bad}: {e}");
        }
        let e = parse("kind = variance\ndx = 0.05\nnx = 100\n").unwrap_err();
        assert!(e.to_string().contains("either dx or nx"));
        let e = parse("kind = variance\nT = 1\ndt = 0.3\n").unwrap_err();
        assert!(e.to_string().contains("T/dt must be an integer"), "{e}");
        let e = parse("kind = variance\nsigma = linear\nlipschitz = 0.5\n").unwrap_err();
        assert_eq!(e.field.as_deref(), Some("lipschitz"));
        let e = parse("kind = fclt\nfdd_R = 5\n").unwrap_err();
        assert_eq!(e.field.as_deref(), Some("fdd_R"));
        let e = parse("kind = clt-rate\nR = 4, 8\n").unwrap_err();
        assert_eq!(e.field.as_deref(), Some("R"));
    }

    #[test]
    fn flags_override_file_values() {
        let mut raw = RawConfig::parse("kind = variance\npaths = 100\nseed = 3\n").unwrap();
        raw.set("paths", "7");
        let c = resolve(&raw, None).unwrap();
        let e = &c.simulation().unwrap().ensemble;
        assert_eq!((e.n_paths, e.master_seed), (7, 3));
        raw.set("paths", "x");
        let err = resolve(&raw, None).unwrap_err();
        assert_eq!(err.origin, Some(Origin::Flag));
    }

    #[test]
    fn defaults_per_kind() {
        for kind in Kind::ALL {
            let c = parse_config_str("", Some(kind)).unwrap();
            assert_eq!(c.kind, kind);
            assert_eq!(c.out, PathBuf::from("out"));
        }
        let c = parse_config_str("", Some(Kind::Variance)).unwrap();
        let e = &c.simulation().unwrap().ensemble;
        assert_eq!(e.sigma, SigmaSpec::constant(1.0));
        assert!((e.grid.dx() - 0.05).abs() < 1e-15 && (e.grid.dt() - 0.00125).abs() < 1e-15);
        let c = parse_config_str("", Some(Kind::Tightness)).unwrap();
        let p = c.simulation().unwrap().sharp.unwrap();
        assert_eq!((p.s, p.t, p.half_width), (0.5, 1.0, 16.0));
        let c = parse_config_str("", Some(Kind::CltRate)).unwrap();
        assert_eq!(c.simulation().unwrap().seeds.as_deref(), Some(&DEFAULT_SEEDS[..]));
    }

    #[test]
    fn round_trip() {
        let texts = [
            "kind = verify-kernels\nplot = true\n",
            "kind = full-suite\nseed = 9\npaths = 300\n",
            "kind = variance\nsigma = affine\nsigma_a = 0.5\nsigma_b = -0.25\nR = 1.5, 3\ntimes = 0.3, 0.7\nT = 0.7\ndx = 0.07\n",
            "kind = clt-rate\nseeds = 4, 5, 6\nsigma_R_mode = split-sample\n",
            "kind = fclt\nsigma = sine\nlipschitz = 2.5\nrecord_xi = false\n",
            "kind = tightness\nsharp_R = 32\nsharp_s = 0.25\nout = some/dir\ncheckpoint_every = 0\n",
        ];
        for text in texts {
            let c = parse(text).unwrap();
            let s = serialize_config(&c);
            let again = parse(&s).unwrap_or_else(|e| panic!("{s}\n{e}"));
            assert_eq!(c, again, "{s}");
            assert_eq!(s, serialize_config(&again));
        }
    }
}
