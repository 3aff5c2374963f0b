//! The heat-kernel identity checks: closed forms against quadrature.

use std::time::Instant;

use rand::Rng;
use shelab_core::kernel::{fejer_tail_integral, iterated_squared_kernel, semigroup_residual, squared_kernel_reduction};
use shelab_core::simulate::derive_stream;

use crate::report::{Bound, Criterion};

pub const GRID_POINTS: usize = 100;
pub const SEMIGROUP_TOL: f64 = 1e-10;
pub const SQUARED_REDUCTION_TOL: f64 = 1e-14;
pub const ITERATED_N1_TOL: f64 = 1e-6;
pub const ITERATED_N2_TOL: f64 = 1e-4;
pub const FEJER_TOL: f64 = 1e-6;
pub const RUNTIME_LIMIT_SECS: f64 = 30.0;
pub const FEJER_WINDOWS: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 10.0];
/// Fixed `(τ, w)` at which the iterated squared kernel is checked.
pub const ITERATED_POINTS: [(f64, f64); 3] = [(1.0, 0.0), (0.5, 0.4), (2.0, -1.5)];
/// Random `(τ, w)`, `τ ∈ [0.1, 4]`, `|w| ≤ 3`, added for orders 1 and 2.
pub const ITERATED_RANDOM_POINTS: (usize, usize) = (20, 5);

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Log-uniform on [0.01, 10].
fn log_time(rng: &mut impl Rng) -> f64 {
    10f64.powf(rng.random_range(-2.0..1.0))
}

/// Runs every identity check; the random evaluation points depend on `seed`.
pub fn verify_kernels(seed: u64) -> Vec<Criterion> {
    let start = Instant::now();
    let mut out = Vec::new();
    let mut rng = derive_stream(seed, u64::MAX - 1).rng();

    let mut worst_semigroup: f64 = 0.0;
    let mut worst_reduction: f64 = 0.0;
    let mut failure = None;
    // x within four standard deviations of the kernel being checked.
    for _ in 0..GRID_POINTS {
        let t = log_time(&mut rng);
        let s = log_time(&mut rng);
        let x = rng.random_range(-4.0..4.0) * (t + s).sqrt();
        match semigroup_residual(t, s, x) {
            Ok(q) if q.converged => worst_semigroup = worst_semigroup.max(q.value),
            Ok(q) => {
                failure = Some(format!(
                    "quadrature did not converge at t = {t}, s = {s}, x = {x}: {q:?}"
                ))
            }
            Err(e) => failure = Some(e.to_string()),
        }
        let y = rng.random_range(-4.0..4.0) * t.sqrt();
        match squared_kernel_reduction(t, y) {
            Ok((l, r)) => worst_reduction = worst_reduction.max(rel(l, r)),
            Err(e) => failure = Some(e.to_string()),
        }
    }
    let grid = format!("{GRID_POINTS} random points, t, s log-uniform on [0.01, 10], seed {seed}");
    match &failure {
        None => {
            out.push(Criterion::new(
                "kernel.semigroup_residual",
                worst_semigroup,
                Bound::at_most(SEMIGROUP_TOL),
                format!("max |∫p_t(x-y)p_s(y)dy - p_(t+s)(x)| over {grid}"),
            ));
            out.push(Criterion::new(
                "kernel.squared_reduction",
                worst_reduction,
                Bound::at_most(SQUARED_REDUCTION_TOL),
                format!("max relative gap of p_t(x)² = (4πt)^(-1/2) p_(t/2)(x) over {grid}"),
            ));
        }
        Some(msg) => {
            out.push(Criterion::failed(
                "kernel.semigroup_residual",
                Bound::at_most(SEMIGROUP_TOL),
                msg.clone(),
            ));
            out.push(Criterion::failed(
                "kernel.squared_reduction",
                Bound::at_most(SQUARED_REDUCTION_TOL),
                msg.clone(),
            ));
        }
    }

    for (n, tol, extra) in [
        (1usize, ITERATED_N1_TOL, ITERATED_RANDOM_POINTS.0),
        (2, ITERATED_N2_TOL, ITERATED_RANDOM_POINTS.1),
    ] {
        let name = format!("kernel.iterated_squared_n{n}");
        let mut worst: f64 = 0.0;
        let mut err = None;
        let random = (0..extra).map(|_| (rng.random_range(0.1..4.0), rng.random_range(-3.0..3.0)));
        for (tau, w) in ITERATED_POINTS.into_iter().chain(random) {
            match iterated_squared_kernel(n, tau, w, true) {
                Ok(k) => {
                    let q = k.quadrature.expect("quadrature requested");
                    worst = worst.max(rel(q.value, k.closed_form));
                }
                Err(e) => err = Some(e.to_string()),
            }
        }
        let at: Vec<String> = ITERATED_POINTS.iter().map(|(t, w)| format!("({t}, {w})")).collect();
        out.push(match err {
            None => Criterion::new(
                name,
                worst,
                Bound::at_most(tol),
                format!(
                    "max relative gap, closed form vs nested quadrature, at (τ, w) = {} and {extra} random points",
                    at.join(", ")
                ),
            ),
            Some(e) => Criterion::failed(name, Bound::at_most(tol), e),
        });
    }

    let mut worst: f64 = 0.0;
    let mut err = None;
    for r in FEJER_WINDOWS {
        match fejer_tail_integral(r) {
            Ok(f) => worst = worst.max((f.quadrature.value / (std::f64::consts::PI * r) - 1.0).abs()),
            Err(e) => err = Some(e.to_string()),
        }
    }
    out.push(match err {
        None => Criterion::new(
            "kernel.fejer_integral",
            worst,
            Bound::at_most(FEJER_TOL),
            format!("max |quadrature/(πR) - 1| over R = {FEJER_WINDOWS:?}"),
        ),
        Some(e) => Criterion::failed("kernel.fejer_integral", Bound::at_most(FEJER_TOL), e),
    });

    out.push(Criterion::new(
        "kernel.runtime_seconds",
        start.elapsed().as_secs_f64(),
        Bound::at_most(RUNTIME_LIMIT_SECS),
        "wall time of the kernel checks",
    ));
    out
}
