//! Explicit finite-difference integration of `∂u/∂t = ½Δu + σ(u)Ẇ`, `u(0,·) = 1`,
//! on the truncated domain `[-L, L]` with Dirichlet value 1 at both ends.
//!
//! One step reads
//!
//! ```text
//! u[m+1][j] = u[m][j] + dt/(2dx²)·(u[m][j+1] - 2u[m][j] + u[m][j-1]) + σ(u[m][j])·ΔW[m][j]/dx
//! ```
//!
//! with `ΔW ~ N(0, dt·dx)` drawn from the counter-keyed stream in [`noise`].

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

pub mod noise;

pub use noise::{derive_stream, sample_noise, CounterRng, NoiseField, StreamKey};

/// Localization margin, in units of `√T`, between the largest averaging
/// window and the truncation boundary.
pub const LOCALIZATION_SDS: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error("stability requires dt <= dx²/2, but dt = {dt} > dx²/2 = {limit}")]
    Unstable { dt: f64, limit: f64 },
    #[error("localization requires L >= R_max + 6·√T = {required}, but L = {half_width}")]
    DomainTooSmall { half_width: f64, required: f64 },
    #[error("{what} must be at least 2, got {got}")]
    TooCoarse { what: &'static str, got: usize },
    #[error("{what} must be finite and strictly positive, got {got}")]
    NonPositive { what: &'static str, got: f64 },
    #[error("time {time} lies outside [0, {final_time}]")]
    TimeOutOfRange { time: f64, final_time: f64 },
    #[error("non-finite value in path {path_id} at step {step}, node {node}")]
    NonFinite { path_id: u64, step: usize, node: usize },
    #[error("lipschitz bound {given} is smaller than the minimal bound {minimal} of this σ")]
    InvalidLipschitz { given: f64, minimal: f64 },
    #[error("raw path dump: {0}")]
    Dump(String),
}

/// Space-time grid on `[0, T] × [-L, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub final_time: f64,
    pub nt: usize,
    /// `L`.
    pub half_width: f64,
    pub nx: usize,
    /// Largest averaging half-width `R` any analysis may request.
    pub max_window: f64,
}

impl GridSpec {
    pub fn new(final_time: f64, nt: usize, half_width: f64, nx: usize, max_window: f64) -> Result<Self, SimulateError> {
        let grid = Self {
            final_time,
            nt,
            half_width,
            nx,
            max_window,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        for (what, got) in [
            ("T", self.final_time),
            ("L", self.half_width),
            ("R_max", self.max_window),
        ] {
            if !(got.is_finite() && got > 0.0) {
                return Err(SimulateError::NonPositive { what, got });
            }
        }
        if self.nt < 2 {
            return Err(SimulateError::TooCoarse {
                what: "nt",
                got: self.nt,
            });
        }
        if self.nx < 2 {
            return Err(SimulateError::TooCoarse {
                what: "nx",
                got: self.nx,
            });
        }
        let limit = 0.5 * self.dx() * self.dx();
        if self.dt() > limit * (1.0 + 1e-12) {
            return Err(SimulateError::Unstable { dt: self.dt(), limit });
        }
        let required = Self::required_half_width(self.max_window, self.final_time);
        if self.half_width < required * (1.0 - 1e-12) {
            return Err(SimulateError::DomainTooSmall {
                half_width: self.half_width,
                required,
            });
        }
        Ok(())
    }

    /// `R_max + 6√T`.
    pub fn required_half_width(max_window: f64, final_time: f64) -> f64 {
        max_window + LOCALIZATION_SDS * final_time.sqrt()
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.final_time / self.nt as f64
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.nx as f64
    }

    /// Position of node `j`, `0 <= j <= nx`.
    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt()
    }

    /// Nearest time step to `t`, and whether `t` was off the grid.
    pub fn step_for_time(&self, t: f64) -> Result<(usize, bool), SimulateError> {
        let tol = 1e-9 * self.final_time;
        if !(t >= -tol && t <= self.final_time + tol) {
            return Err(SimulateError::TimeOutOfRange {
                time: t,
                final_time: self.final_time,
            });
        }
        let step = ((t / self.dt()).round() as usize).min(self.nt);
        let snapped = (self.time(step) - t).abs() > tol;
        Ok((step, snapped))
    }
}

/// The nonlinearity σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaKind {
    /// σ(u) = c.
    Constant { c: f64 },
    /// σ(u) = u, the parabolic Anderson model.
    Linear,
    /// σ(u) = a + b·u.
    Affine { a: f64, b: f64 },
    /// σ(u) = sin(u); bounded and smooth.
    Sine,
}

impl SigmaKind {
    pub fn minimal_lipschitz(&self) -> f64 {
        match *self {
            SigmaKind::Constant { .. } => 0.0,
            SigmaKind::Linear | SigmaKind::Sine => 1.0,
            SigmaKind::Affine { b, .. } => b.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSpec {
    pub kind: SigmaKind,
    pub lipschitz_bound: f64,
}

impl SigmaSpec {
    /// Uses the smallest valid Lipschitz constant of `kind`.
    pub fn new(kind: SigmaKind) -> Self {
        Self {
            kind,
            lipschitz_bound: kind.minimal_lipschitz(),
        }
    }

    pub fn with_lipschitz_bound(kind: SigmaKind, bound: f64) -> Result<Self, SimulateError> {
        let minimal = kind.minimal_lipschitz();
        if !(bound >= minimal) || !bound.is_finite() {
            return Err(SimulateError::InvalidLipschitz { given: bound, minimal });
        }
        Ok(Self {
            kind,
            lipschitz_bound: bound,
        })
    }

    pub fn constant(c: f64) -> Self {
        Self::new(SigmaKind::Constant { c })
    }

    pub fn anderson() -> Self {
        Self::new(SigmaKind::Linear)
    }

    #[inline]
    pub fn eval<T: Real>(&self, u: T) -> T {
        match self.kind {
            SigmaKind::Constant { c } => T::lit(c),
            SigmaKind::Linear => u,
            SigmaKind::Affine { a, b } => T::lit(a) + T::lit(b) * u,
            SigmaKind::Sine => u.sin(),
        }
    }

    /// σ(1) = 0: the normalizing variance may vanish.
    pub fn may_degenerate(&self) -> bool {
        self.eval(1.0f64) == 0.0
    }
}

/// σ(u).
pub fn sigma_eval(spec: &SigmaSpec, u: f64) -> f64 {
    spec.eval(u)
}

/// One simulated solution, `(nt + 1) × (nx + 1)` node values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathField<T> {
    pub values: Vec<T>,
    pub grid: GridSpec,
}

impl<T: Real> PathField<T> {
    pub fn row(&self, step: usize) -> &[T] {
        let w = self.grid.nx + 1;
        &self.values[step * w..(step + 1) * w]
    }

    pub fn at(&self, step: usize, node: usize) -> T {
        self.values[step * (self.grid.nx + 1) + node]
    }

    /// Writes the raw dump: a 32-byte header (`"SHE1"`, `nt: u32`, `nx: u32`,
    /// reserved `u32`, `T: f64`, `L: f64`, all little-endian) followed by the
    /// node values as row-major little-endian `f64`.
    pub fn write_raw<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(b"SHE1")?;
        out.write_all(&(self.grid.nt as u32).to_le_bytes())?;
        out.write_all(&(self.grid.nx as u32).to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        out.write_all(&self.grid.final_time.to_le_bytes())?;
        out.write_all(&self.grid.half_width.to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_f64().unwrap_or(f64::NAN).to_le_bytes())?;
        }
        Ok(())
    }
}

/// Reads a dump written by [`PathField::write_raw`]. The dump does not carry
/// `R_max`, so the caller supplies it.
pub fn read_raw<R: Read>(mut input: R, max_window: f64) -> Result<PathField<f64>, SimulateError> {
    let mut header = [0u8; 32];
    input
        .read_exact(&mut header)
        .map_err(|e| SimulateError::Dump(e.to_string()))?;
    if &header[0..4] != b"SHE1" {
        return Err(SimulateError::Dump("bad magic".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap()) as usize;
    let f64_at = |i: usize| f64::from_le_bytes(header[i..i + 8].try_into().unwrap());
    let grid = GridSpec {
        final_time: f64_at(16),
        nt: u32_at(4),
        half_width: f64_at(24),
        nx: u32_at(8),
        max_window,
    };
    let count = (grid.nt + 1) * (grid.nx + 1);
    let mut bytes = vec![0u8; count * 8];
    input
        .read_exact(&mut bytes)
        .map_err(|e| SimulateError::Dump(e.to_string()))?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(PathField { values, grid })
}

/// Integrates one path, handing every time row (including row 0) to `visit`.
///
/// Nothing but two rows and a noise buffer is kept in memory, so this is the
/// entry point for streaming consumers.
pub fn integrate_path_with<T, F>(
    grid: &GridSpec,
    sigma: &SigmaSpec,
    master_seed: u64,
    path_id: u64,
    visit: F,
) -> Result<(), SimulateError>
where
    T: Real,
    F: FnMut(usize, &[T]),
{
    grid.validate()?;
    let key = derive_stream(master_seed, path_id);
    match sigma.kind {
        SigmaKind::Constant { c } => {
            let c = T::lit(c);
            step_all(grid, key, path_id, move |_| c, visit)
        }
        SigmaKind::Linear => step_all(grid, key, path_id, |u| u, visit),
        SigmaKind::Affine { a, b } => {
            let (a, b) = (T::lit(a), T::lit(b));
            step_all(grid, key, path_id, move |u| a + b * u, visit)
        }
        SigmaKind::Sine => step_all(grid, key, path_id, |u: T| u.sin(), visit),
    }
}

fn step_all<T, S, F>(grid: &GridSpec, key: StreamKey, path_id: u64, sigma: S, mut visit: F) -> Result<(), SimulateError>
where
    T: Real,
    S: Fn(T) -> T,
    F: FnMut(usize, &[T]),
{
    let nodes = grid.nx + 1;
    let diffusion = T::lit(grid.dt() / (2.0 * grid.dx() * grid.dx()));
    let amplitude = (grid.dt() / grid.dx()).sqrt();
    let two = T::lit(2.0);

    let mut current = vec![T::one(); nodes];
    let mut next = vec![T::one(); nodes];
    let mut normals = vec![0.0f64; grid.nx];
    visit(0, &current);

    for step in 0..grid.nt {
        noise::standard_normal_row(key, step, &mut normals);
        for ((out, w), &z) in next[1..grid.nx].iter_mut().zip(current.windows(3)).zip(&normals[1..]) {
            let u = w[1];
            *out = u + diffusion * (w[2] - two * u + w[0]) + sigma(u) * T::lit(amplitude * z);
        }
        if let Some(node) = next.iter().position(|v| !v.is_finite()) {
            return Err(SimulateError::NonFinite {
                path_id,
                step: step + 1,
                node,
            });
        }
        std::mem::swap(&mut current, &mut next);
        visit(step + 1, &current);
    }
    Ok(())
}

/// Integrates one full path and keeps every node value.
pub fn integrate_path<T: Real>(
    grid: &GridSpec,
    sigma: &SigmaSpec,
    master_seed: u64,
    path_id: u64,
) -> Result<PathField<T>, SimulateError> {
    let mut values = Vec::with_capacity((grid.nt + 1) * (grid.nx + 1));
    integrate_path_with(grid, sigma, master_seed, path_id, |_, row: &[T]| {
        values.extend_from_slice(row)
    })?;
    Ok(PathField { values, grid: *grid })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> GridSpec {
        GridSpec::new(0.5, 400, 6.0, 240, 1.0).unwrap()
    }

    #[test]
    fn grid_invariants_are_enforced() {
        assert!(matches!(
            GridSpec::new(1.0, 100, 10.0, 400, 4.0),
            Err(SimulateError::Unstable { .. })
        ));
        assert!(matches!(
            GridSpec::new(1.0, 800, 9.0, 360, 4.0),
            Err(SimulateError::DomainTooSmall { .. })
        ));
        assert!(matches!(
            GridSpec::new(1.0, 1, 10.0, 400, 4.0),
            Err(SimulateError::TooCoarse { .. })
        ));
        // dt = dx²/2 exactly is allowed
        let g = GridSpec::new(1.0, 800, 10.0, 400, 4.0).unwrap();
        assert!((g.dx() - 0.05).abs() < 1e-15 && (g.dt() - 0.00125).abs() < 1e-15);
    }

    #[test]
    fn step_snapping() {
        let g = small_grid();
        assert_eq!(g.step_for_time(0.25).unwrap(), (200, false));
        assert_eq!(g.step_for_time(0.2504).unwrap(), (200, true));
        assert!(g.step_for_time(0.6).is_err());
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_eval(&SigmaSpec::anderson(), 2.0), 2.0);
        assert_eq!(sigma_eval(&SigmaSpec::constant(3.0), -7.5), 3.0);
        let affine = SigmaSpec::new(SigmaKind::Affine { a: 1.0, b: -0.5 });
        assert_eq!(sigma_eval(&affine, 2.0), 0.0);
        assert_eq!(affine.lipschitz_bound, 0.5);
        assert!(SigmaSpec::with_lipschitz_bound(SigmaKind::Linear, 0.5).is_err());
        assert!(SigmaSpec::new(SigmaKind::Affine { a: -2.0, b: 2.0 }).may_degenerate());
        assert!(!SigmaSpec::new(SigmaKind::Sine).may_degenerate());
    }

    #[test]
    fn zero_noise_keeps_flat_profile() {
        let path = integrate_path::<f64>(&small_grid(), &SigmaSpec::constant(0.0), 1, 0).unwrap();
        assert!(path.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn path_matches_hand_stepping_with_sampled_noise() {
        let g = GridSpec::new(0.1, 40, 3.0, 60, 1.0).unwrap();
        let sigma = SigmaSpec::anderson();
        let path = integrate_path::<f64>(&g, &sigma, 9, 4).unwrap();
        let noise = sample_noise(&g, 9, 4);
        let lam = g.dt() / (2.0 * g.dx() * g.dx());
        let mut u = vec![1.0; g.nx + 1];
        for m in 0..g.nt {
            let row = noise.row(m);
            let mut next = u.clone();
            for j in 1..g.nx {
                next[j] = u[j] + lam * (u[j + 1] - 2.0 * u[j] + u[j - 1]) + u[j] * row[j] / g.dx();
            }
            u = next;
            for j in 0..=g.nx {
                let rel = (u[j] - path.at(m + 1, j)).abs() / u[j].abs().max(1.0);
                assert!(rel < 1e-12, "step {m} node {j}");
            }
        }
    }

    #[test]
    fn boundary_and_initial_rows_are_pinned() {
        let g = small_grid();
        let path = integrate_path::<f64>(&g, &SigmaSpec::anderson(), 3, 1).unwrap();
        assert!(path.row(0).iter().all(|&v| v == 1.0));
        for m in 0..=g.nt {
            assert_eq!(path.at(m, 0), 1.0);
            assert_eq!(path.at(m, g.nx), 1.0);
        }
        assert!(path.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn path_is_bitwise_reproducible() {
        let g = small_grid();
        let s = SigmaSpec::new(SigmaKind::Sine);
        let a = integrate_path::<f64>(&g, &s, 77, 5).unwrap();
        let b = integrate_path::<f64>(&g, &s, 77, 5).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn single_precision_path_tracks_double() {
        let g = small_grid();
        let s = SigmaSpec::constant(1.0);
        let a = integrate_path::<f64>(&g, &s, 2, 2).unwrap();
        let b = integrate_path::<f32>(&g, &s, 2, 2).unwrap();
        let worst = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - *y as f64).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn blow_up_is_reported_with_location() {
        let g = GridSpec::new(1.0, 200, 7.0, 140, 1.0).unwrap();
        let s = SigmaSpec::new(SigmaKind::Affine { a: 0.0, b: 1e150 });
        match integrate_path::<f64>(&g, &s, 1, 0) {
            Err(SimulateError::NonFinite { path_id: 0, step, node }) => {
                assert!(step >= 1 && node > 0 && node < g.nx);
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn raw_dump_round_trip() {
        let g = GridSpec::new(0.1, 20, 3.0, 30, 1.0).unwrap();
        let path = integrate_path::<f64>(&g, &SigmaSpec::anderson(), 1, 1).unwrap();
        let mut buf = Vec::new();
        path.write_raw(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SHE1");
        assert_eq!(buf.len(), 32 + 8 * path.values.len());
        let back = read_raw(&buf[..], 1.0).unwrap();
        assert_eq!(back, path);
        assert!(read_raw(&buf[..40], 1.0).is_err());
    }
}
