//! Bounded, mergeable sample of per-path values.
//!
//! Each candidate gets a priority hashed from `(master_seed, cell, path_id)`
//! and the reservoir keeps the `capacity` smallest priorities. The retained
//! set is therefore a function of the set of offered path ids alone, which
//! makes merging exact: union, then truncate.

use serde::{Deserialize, Serialize};

use crate::simulate::noise::mix64;

pub const DEFAULT_RESERVOIR_CAPACITY: usize = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirEntry {
    pub priority: u64,
    pub path_id: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    pub capacity: usize,
    salt: u64,
    /// Sorted by `(priority, path_id)`.
    entries: Vec<ReservoirEntry>,
}

impl Reservoir {
    pub fn new(capacity: usize, master_seed: u64, cell: u64) -> Self {
        Self {
            capacity,
            salt: mix64(mix64(master_seed ^ 0x7265_7365_7276_6f69) ^ cell),
            entries: Vec::new(),
        }
    }

    pub fn from_entries(capacity: usize, master_seed: u64, cell: u64, mut entries: Vec<ReservoirEntry>) -> Self {
        entries.sort_by_key(|e| (e.priority, e.path_id));
        entries.truncate(capacity);
        Self {
            entries,
            ..Self::new(capacity, master_seed, cell)
        }
    }

    pub fn priority(&self, path_id: u64) -> u64 {
        mix64(self.salt.wrapping_add(mix64(path_id)))
    }

    pub fn offer(&mut self, path_id: u64, value: f64) {
        let entry = ReservoirEntry {
            priority: self.priority(path_id),
            path_id,
            value,
        };
        let key = (entry.priority, entry.path_id);
        if self.entries.len() >= self.capacity {
            match self.entries.last() {
                Some(last) if (last.priority, last.path_id) > key => {
                    self.entries.pop();
                }
                _ => return,
            }
        }
        let at = self.entries.partition_point(|e| (e.priority, e.path_id) < key);
        self.entries.insert(at, entry);
    }

    pub fn merge(&mut self, other: &Reservoir) {
        let mut merged = Vec::with_capacity((self.entries.len() + other.entries.len()).min(self.capacity));
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        while merged.len() < self.capacity {
            let next = match (a.peek(), b.peek()) {
                (Some(x), Some(y)) => {
                    if (x.priority, x.path_id) <= (y.priority, y.path_id) {
                        a.next()
                    } else {
                        b.next()
                    }
                }
                (Some(_), None) => a.next(),
                (None, Some(_)) => b.next(),
                (None, None) => break,
            };
            merged.push(*next.unwrap());
        }
        self.entries = merged;
    }

    pub fn entries(&self) -> &[ReservoirEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Retained values in ascending path-id order.
    pub fn values_by_path(&self) -> Vec<(u64, f64)> {
        let mut v: Vec<_> = self.entries.iter().map(|e| (e.path_id, e.value)).collect();
        v.sort_by_key(|&(id, _)| id);
        v
    }
}
