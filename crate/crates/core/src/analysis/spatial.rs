//! `G_R(t) = ∫_{-R}^{R} u(t,x) dx - 2R` from node values.

use crate::real::Real;
use crate::simulate::{GridSpec, PathField};

use super::AnalysisError;

/// Integral of the piecewise-linear interpolant of `row - 1` over `[-R, R]`.
///
/// When `±R` fall on nodes this is the trapezoid rule. Integrating `u - 1`
/// rather than `u` makes a flat profile give exactly zero.
pub fn window_integral<T: Real>(row: &[T], grid: &GridSpec, half_width: f64) -> T {
    debug_assert_eq!(row.len(), grid.nx + 1);
    let dx = grid.dx();
    let l = grid.half_width;
    let (a, b) = (-half_width.min(l), half_width.min(l));
    let first = (((a + l) / dx).floor().max(0.0) as usize).min(grid.nx - 1);
    let last = (((b + l) / dx).ceil() as usize).clamp(first + 1, grid.nx);
    let one = T::one();
    let half = T::lit(0.5);
    let mut total = T::zero();
    for j in first..last {
        let (x0, x1) = (grid.x(j), grid.x(j + 1));
        let lo = a.max(x0);
        let hi = b.min(x1);
        if hi <= lo {
            continue;
        }
        let (u0, u1) = (row[j] - one, row[j + 1] - one);
        if lo == x0 && hi == x1 {
            total = total + T::lit(dx) * half * (u0 + u1);
        } else {
            let w = T::lit(((lo + hi) * 0.5 - x0) / dx);
            total = total + T::lit(hi - lo) * (u0 + w * (u1 - u0));
        }
    }
    total
}

/// `G_R(t)` of a stored path. Off-grid times snap to the nearest step with a
/// warning.
pub fn spatial_integral<T: Real>(path: &PathField<T>, half_width: f64, t: f64) -> Result<T, AnalysisError> {
    let grid = &path.grid;
    if !(half_width > 0.0) || half_width > grid.max_window * (1.0 + 1e-12) {
        return Err(AnalysisError::WindowTooWide {
            half_width,
            max_window: grid.max_window,
        });
    }
    let (step, snapped) = grid.step_for_time(t)?;
    if snapped {
        log::warn!(
            "t = {t} is not on the time grid; using step {step} (t = {})",
            grid.time(step)
        );
    }
    Ok(window_integral(path.row(step), grid, half_width))
}
