//! Counter-keyed space-time white noise.
//!
//! A path's stream key is a mix of `(master_seed, path_id)`; each time row
//! gets its own SplitMix64 counter stream keyed by `(stream key, step)`, and
//! cell `j` of that row is drawn from the row stream in cell order. The noise
//! is therefore a pure function of `(master_seed, path_id, step, cell)` and
//! does not depend on which worker simulates the path.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::GridSpec;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key of the random stream belonging to one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey(pub u64);

pub fn derive_stream(master_seed: u64, path_id: u64) -> StreamKey {
    let seed = mix64(master_seed ^ 0x5348_4531_5f6d_6173);
    StreamKey(mix64(
        seed.wrapping_add(mix64(path_id.wrapping_mul(GOLDEN_GAMMA) ^ 0x7061_7468)),
    ))
}

impl StreamKey {
    /// Independent sub-key, e.g. one per time step.
    pub fn child(self, index: u64) -> StreamKey {
        StreamKey(mix64(self.0 ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))))
    }

    pub fn rng(self) -> CounterRng {
        CounterRng {
            key: self.0,
            counter: 0,
        }
    }
}

/// Output `i` is `mix64(key + (i + 1)·γ)`, i.e. a SplitMix64 sequence that can
/// be positioned anywhere in O(1).
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn at(key: StreamKey, counter: u64) -> Self {
        Self { key: key.0, counter }
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Fills `row` with independent standard normals for time step `step`.
#[inline]
pub(crate) fn standard_normal_row(key: StreamKey, step: usize, row: &mut [f64]) {
    let mut rng = key.child(step as u64).rng();
    for z in row.iter_mut() {
        *z = StandardNormal.sample(&mut rng);
    }
}

/// White-noise masses `W(cell)` of every space-time cell of one path.
///
/// Row `m` holds the `nx` cells of the time slab `[m·dt, (m+1)·dt)`; entry `j`
/// is the mass of the cell of width `dx` centred on node `j`. Every entry is
/// `N(0, dt·dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    pub increments: Vec<f64>,
    pub nt: usize,
    pub nx: usize,
    pub master_seed: u64,
    pub path_id: u64,
}

impl NoiseField {
    pub fn row(&self, step: usize) -> &[f64] {
        &self.increments[step * self.nx..(step + 1) * self.nx]
    }
}

pub fn sample_noise(grid: &GridSpec, master_seed: u64, path_id: u64) -> NoiseField {
    let key = derive_stream(master_seed, path_id);
    let scale = (grid.dt() * grid.dx()).sqrt();
    let mut increments = vec![0.0; grid.nt * grid.nx];
    for (step, row) in increments.chunks_mut(grid.nx).enumerate() {
        standard_normal_row(key, step, row);
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    NoiseField {
        increments,
        nt: grid.nt,
        nx: grid.nx,
        master_seed,
        path_id,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn grid() -> GridSpec {
        GridSpec::new(1.0, 800, 10.0, 400, 4.0).unwrap()
    }

    #[test]
    fn stream_keys_are_deterministic_and_distinct() {
        assert_eq!(derive_stream(7, 3), derive_stream(7, 3));
        assert_ne!(derive_stream(7, 3), derive_stream(7, 4));
        assert_ne!(derive_stream(7, 3), derive_stream(8, 3));
        let keys: HashSet<_> = (0..100_000).map(|k| derive_stream(42, k)).collect();
        assert_eq!(keys.len(), 100_000);
    }

    #[test]
    fn neighbouring_streams_are_uncorrelated() {
        let draws = 10_000;
        let streams: Vec<Vec<f64>> = (0..1000)
            .map(|k| {
                let mut rng = derive_stream(2024, k).rng();
                (0..draws).map(|_| StandardNormal.sample(&mut rng)).collect()
            })
            .collect();
        let mut worst: f64 = 0.0;
        for pair in streams.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let n = draws as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
            let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
            worst = worst.max((cov / (va * vb).sqrt()).abs());
        }
        assert!(worst < 0.05, "max |rho| = {worst}");
    }

    #[test]
    fn counter_rng_can_be_positioned() {
        let key = derive_stream(1, 2);
        let mut a = key.rng();
        let seq: Vec<u64> = (0..10).map(|_| a.next_u64()).collect();
        let mut b = CounterRng::at(key, 6);
        assert_eq!(b.next_u64(), seq[6]);
    }

    #[test]
    fn noise_moments() {
        let g = grid();
        let field = sample_noise(&g, 11, 0);
        let n = field.increments.len();
        assert!(n >= 100_000);
        let var_cell = g.dt() * g.dx();
        let mean = field.increments.iter().sum::<f64>() / n as f64;
        let se = (var_cell / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "mean {mean} se {se}");
        let var = field.increments.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let ratio = var / var_cell;
        assert!((0.98..=1.02).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn noise_is_bitwise_reproducible() {
        let g = grid();
        let a = sample_noise(&g, 5, 17);
        let b = sample_noise(&g, 5, 17);
        assert!(a
            .increments
            .iter()
            .zip(&b.increments)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.increments, sample_noise(&g, 5, 18).increments);
    }
}
