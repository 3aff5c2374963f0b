//! Versioned binary checkpoint of an [`EnsembleSummary`].
//!
//! ```text
//! "SHEE" | version: u32 | fingerprint: u64
//! block*  where block = tag: [u8; 4] | len: u64 | payload
//! ```
//!
//! Blocks, in order: `CONF` (configuration as JSON), `RANG` (covered path
//! ranges), `ABRT` (aborted paths), `HALF` twice (exact moment sums), `RESV`
//! (reservoir entries), `END!` (FNV-1a 64 of every preceding byte). Integers
//! and floats are little-endian.

use std::fs;
use std::hash::Hasher;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::{AbortedPath, EnsembleConfig, EnsembleSummary, ExactSum, Reservoir, ReservoirEntry};

pub const MAGIC: &[u8; 4] = b"SHEE";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {VERSION})")]
    Version { found: u32 },
    #[error("checkpoint is truncated or corrupt: {0}")]
    Corrupt(String),
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("checkpoint belongs to a different configuration (fingerprint {found:016x}, expected {expected:016x})")]
    Fingerprint { found: u64, expected: u64 },
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn block(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn encode(summary: &EnsembleSummary) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u64(&mut out, summary.fingerprint);

    let conf = serde_json::to_vec(&summary.config).expect("config serializes");
    block(&mut out, b"CONF", &conf);

    let mut p = Vec::new();
    put_u64(&mut p, summary.ranges.len() as u64);
    for &(a, b) in &summary.ranges {
        put_u64(&mut p, a);
        put_u64(&mut p, b);
    }
    block(&mut out, b"RANG", &p);

    let mut p = Vec::new();
    put_u64(&mut p, summary.aborted.len() as u64);
    for a in &summary.aborted {
        put_u64(&mut p, a.path_id);
        put_u64(&mut p, a.step as u64);
        put_u64(&mut p, a.node as u64);
    }
    block(&mut out, b"ABRT", &p);

    for half in &summary.halves {
        let mut half = half.clone();
        let mut p = Vec::new();
        put_u64(&mut p, half.count);
        for s in half.sums_mut() {
            for limb in s.limbs() {
                put_u64(&mut p, limb);
            }
            p.push(s.is_poisoned() as u8);
        }
        block(&mut out, b"HALF", &p);
    }

    let mut p = Vec::new();
    put_u64(&mut p, summary.reservoirs.len() as u64);
    for r in &summary.reservoirs {
        put_u64(&mut p, r.len() as u64);
        for e in r.entries() {
            put_u64(&mut p, e.priority);
            put_u64(&mut p, e.path_id);
            put_u64(&mut p, e.value.to_bits());
        }
    }
    block(&mut out, b"RESV", &p);

    let sum = fnv(&out);
    block(&mut out, b"END!", &sum.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Corrupt(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn block(&mut self, tag: &[u8; 4]) -> Result<Cursor<'a>, CheckpointError> {
        let found = self.take(4)?;
        if found != tag {
            return Err(CheckpointError::Corrupt(format!(
                "expected block {:?}, found {:?}",
                String::from_utf8_lossy(tag),
                String::from_utf8_lossy(found)
            )));
        }
        let len = self.u64()?;
        let len = usize::try_from(len).map_err(|_| CheckpointError::Corrupt("block length overflow".into()))?;
        Ok(Cursor {
            bytes: self.take(len)?,
            pos: 0,
        })
    }

    fn finish(&self) -> Result<(), CheckpointError> {
        if self.pos != self.bytes.len() {
            return Err(CheckpointError::Corrupt("trailing bytes in block".into()));
        }
        Ok(())
    }

    fn count(&mut self, item_bytes: usize) -> Result<usize, CheckpointError> {
        let n = self.u64()? as usize;
        if n.saturating_mul(item_bytes) > self.bytes.len() - self.pos {
            return Err(CheckpointError::Corrupt("count exceeds block size".into()));
        }
        Ok(n)
    }
}

pub fn decode(bytes: &[u8]) -> Result<EnsembleSummary, CheckpointError> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            CheckpointError::BadMagic
        } else {
            CheckpointError::Corrupt("file shorter than the header".into())
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let fingerprint = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let mut cur = Cursor { bytes, pos: 16 };

    let conf = cur.block(b"CONF")?;
    let config: EnsembleConfig =
        serde_json::from_slice(conf.bytes).map_err(|e| CheckpointError::Corrupt(format!("configuration: {e}")))?;
    if config.fingerprint() != fingerprint {
        return Err(CheckpointError::Corrupt(
            "header fingerprint does not match the stored configuration".into(),
        ));
    }
    config
        .validate()
        .map_err(|e| CheckpointError::Corrupt(format!("stored configuration is invalid: {e}")))?;
    let mut summary = EnsembleSummary::empty(&config);

    let mut b = cur.block(b"RANG")?;
    let n = b.count(16)?;
    for _ in 0..n {
        summary.ranges.push((b.u64()?, b.u64()?));
    }
    b.finish()?;

    let mut b = cur.block(b"ABRT")?;
    let n = b.count(24)?;
    for _ in 0..n {
        summary.aborted.push(AbortedPath {
            path_id: b.u64()?,
            step: b.u64()? as usize,
            node: b.u64()? as usize,
        });
    }
    b.finish()?;

    for half in summary.halves.iter_mut() {
        let mut b = cur.block(b"HALF")?;
        half.count = b.u64()?;
        for s in half.sums_mut() {
            let limbs = [b.u64()?, b.u64()?, b.u64()?, b.u64()?];
            *s = ExactSum::from_parts(limbs, b.u8()? != 0);
        }
        b.finish()?;
    }

    let mut b = cur.block(b"RESV")?;
    let n = b.count(8)?;
    if n != summary.reservoirs.len() {
        return Err(CheckpointError::Corrupt(
            "reservoir count does not match the configuration".into(),
        ));
    }
    for (cell, r) in summary.reservoirs.iter_mut().enumerate() {
        let len = b.count(24)?;
        let mut entries = Vec::with_capacity(len);
        for _ in 0..len {
            entries.push(ReservoirEntry {
                priority: b.u64()?,
                path_id: b.u64()?,
                value: f64::from_bits(b.u64()?),
            });
        }
        *r = Reservoir::from_entries(config.reservoir_capacity, config.master_seed, cell as u64, entries);
    }
    b.finish()?;

    let checked = cur.pos;
    let mut b = cur.block(b"END!")?;
    let sum = b.u64()?;
    b.finish()?;
    if sum != fnv(&bytes[..checked]) {
        return Err(CheckpointError::Checksum);
    }
    if cur.pos != bytes.len() {
        return Err(CheckpointError::Corrupt("trailing bytes after the end block".into()));
    }
    Ok(summary)
}

/// FNV-1a 64 of the encoded summary: equal digests mean bitwise-equal
/// moment sums, reservoirs and path ranges.
pub fn digest(summary: &EnsembleSummary) -> u64 {
    fnv(&encode(summary))
}

/// Writes atomically (temporary file, then rename).
pub fn write_checkpoint(summary: &EnsembleSummary, path: &Path) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("shee.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(summary))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<EnsembleSummary, CheckpointError> {
    decode(&fs::read(path)?)
}

/// Reads a checkpoint and checks it belongs to `config`.
pub fn read_checkpoint_for(path: &Path, config: &EnsembleConfig) -> Result<EnsembleSummary, CheckpointError> {
    let s = read_checkpoint(path)?;
    let expected = config.fingerprint();
    if s.fingerprint != expected {
        return Err(CheckpointError::Fingerprint {
            found: s.fingerprint,
            expected,
        });
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::tests::small_config;
    use crate::ensemble::{run_ensemble, run_ensemble_with, RunOptions};

    #[test]
    fn round_trip_is_lossless() {
        let s = run_ensemble(&small_config(40), 2).unwrap();
        let back = decode(&encode(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = encode(&run_ensemble(&small_config(5), 1).unwrap());
        for cut in [0, 3, 10, 16, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut flipped = bytes.clone();
        let k = bytes.len() - 30;
        flipped[k] ^= 0x40;
        assert!(decode(&flipped).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(matches!(
            decode(&wrong_version),
            Err(CheckpointError::Version { found: 9 })
        ));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(decode(&magic), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn interrupted_run_resumes_to_the_same_summary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.shee");
        let cfg = small_config(90);
        let opts = RunOptions {
            workers: 3,
            checkpoint: Some(&path),
            checkpoint_every: 20,
            stop_after: Some(45),
        };
        let partial = run_ensemble_with(&cfg, &opts, None).unwrap();
        assert_eq!(partial.next_path_id(), 45);
        let loaded = read_checkpoint_for(&path, &cfg).unwrap();
        assert_eq!(loaded, partial);
        let resumed = run_ensemble_with(
            &cfg,
            &RunOptions {
                workers: 1,
                ..RunOptions::default()
            },
            Some(loaded),
        )
        .unwrap();
        assert_eq!(resumed, run_ensemble(&cfg, 4).unwrap());
        let mut other = cfg;
        other.master_seed = 1;
        assert!(matches!(
            read_checkpoint_for(&path, &other),
            Err(CheckpointError::Fingerprint { .. })
        ));
    }
}
