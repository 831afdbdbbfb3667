// Copyright 2026 The Vexlog Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


//! Open-addressing hash index over key columns.
//!
//! Slots hold `(hash fragment << 32) | row`; the index never stores key
//! values, so lookups confirm a candidate row against the key columns.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::value::Cell;

const EMPTY: u64 = u64::MAX;
pub const DEFAULT_OCCUPANCY: f64 = 2.0;
const MIN_PAR_ROWS: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HashError {
    #[error("hash index with {capacity} slots cannot hold {rows} keys")]
    Full { capacity: usize, rows: usize },
    #[error("hash index cannot address {0} rows")]
    TooManyRows(usize),
}

/// Slot count for `rows` keys at occupancy factor `o`.
pub fn capacity_for(rows: usize, o: f64) -> usize {
    ((rows as f64 * o).ceil() as usize).max(1).next_power_of_two()
}

#[inline]
pub fn hash_row(keys: &[&[Cell]], row: usize) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for col in keys {
        h = (h ^ col[row]).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h.wrapping_mul(0x94d0_49bb_1331_11eb) ^ (h >> 29)
}

#[inline]
fn keys_equal(a: &[&[Cell]], i: usize, b: &[&[Cell]], j: usize) -> bool {
    a.iter().zip(b).all(|(x, y)| x[i] == y[j])
}

#[derive(Debug, Default)]
pub struct HashIndex {
    slots: Vec<AtomicU64>,
    rows: usize,
    /// Zero-width index: every probe matches every row.
    trivial: bool,
}

impl HashIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Makes room for `capacity` slots. Returns true if memory was
    /// allocated.
    pub fn reserve(&mut self, capacity: usize) -> bool {
        let grew = self.slots.capacity() < capacity;
        self.slots.clear();
        if grew {
            self.slots = Vec::with_capacity(capacity);
        }
        self.slots.resize_with(capacity, || AtomicU64::new(EMPTY));
        grew
    }

    pub fn build_trivial(&mut self, rows: usize) {
        self.trivial = true;
        self.rows = rows;
    }

    /// Inserts rows `0..n` of `keys` with parallel compare-and-swap slot
    /// claims. Slot storage must already be reserved.
    pub fn build(&mut self, keys: &[&[Cell]], n: usize) -> Result<(), HashError> {
        self.trivial = false;
        self.rows = n;
        if n >= u32::MAX as usize {
            return Err(HashError::TooManyRows(n));
        }
        let cap = self.slots.len();
        if n >= cap {
            return Err(HashError::Full { capacity: cap, rows: n });
        }
        for s in &self.slots {
            s.store(EMPTY, Ordering::Relaxed);
        }
        let mask = cap - 1;
        let slots = &self.slots;
        (0..n).into_par_iter().with_min_len(MIN_PAR_ROWS).for_each(|row| {
            let h = hash_row(keys, row);
            let entry = (h & 0xffff_ffff_0000_0000) | row as u64;
            let mut s = h as usize & mask;
            loop {
                if slots[s]
                    .compare_exchange(EMPTY, entry, Ordering::AcqRel, Ordering::Relaxed)
                    .is_ok()
                {
                    return;
                }
                s = (s + 1) & mask;
            }
        });
        Ok(())
    }

    /// Calls `f` for every build row whose keys equal probe row `row`.
    #[inline]
    pub fn for_each_match(
        &self,
        probe: &[&[Cell]],
        row: usize,
        build: &[&[Cell]],
        mut f: impl FnMut(usize),
    ) {
        if self.trivial {
            (0..self.rows).for_each(f);
            return;
        }
        let cap = self.slots.len();
        if cap == 0 {
            return;
        }
        let mask = cap - 1;
        let h = hash_row(probe, row);
        let frag = h & 0xffff_ffff_0000_0000;
        let mut s = h as usize & mask;
        for _ in 0..cap {
            let e = self.slots[s].load(Ordering::Relaxed);
            if e == EMPTY {
                return;
            }
            if e & 0xffff_ffff_0000_0000 == frag {
                let b = (e & 0xffff_ffff) as usize;
                if keys_equal(probe, row, build, b) {
                    f(b);
                }
            }
            s = (s + 1) & mask;
        }
    }

    pub fn count(&self, probe: &[&[Cell]], row: usize, build: &[&[Cell]]) -> usize {
        if self.trivial {
            return self.rows;
        }
        let mut c = 0;
        self.for_each_match(probe, row, build, |_| c += 1);
        c
    }

    /// Number of occupied slots.
    pub fn occupied(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| s.load(Ordering::Relaxed) != EMPTY)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn built(keys: &[&[Cell]], n: usize) -> HashIndex {
        let mut h = HashIndex::new();
        h.reserve(capacity_for(n, DEFAULT_OCCUPANCY));
        h.build(keys, n).unwrap();
        h
    }

    #[test]
    fn capacity_rounds_up() {
        assert_eq!(capacity_for(3, 2.0), 8);
        assert_eq!(capacity_for(0, 2.0), 1);
        assert_eq!(capacity_for(4, 2.0), 8);
    }

    #[test]
    fn single_match() {
        let build_col: Vec<Cell> = vec![1, 2];
        let probe_col: Vec<Cell> = vec![2];
        let h = built(&[&build_col], 2);
        let mut hits = Vec::new();
        h.for_each_match(&[&probe_col], 0, &[&build_col], |b| hits.push(b));
        assert_eq!(hits, vec![1]);
        assert_eq!(h.count(&[&[7]], 0, &[&build_col]), 0);
    }

    #[test]
    fn full_index_is_reported() {
        let col: Vec<Cell> = vec![1, 2, 3, 4];
        let mut h = HashIndex::new();
        h.reserve(4);
        assert!(matches!(h.build(&[&col], 4), Err(HashError::Full { .. })));
    }

    proptest! {
        #[test]
        fn every_key_is_found(keys in proptest::collection::vec(0u64..50, 0..300)) {
            let h = built(&[&keys], keys.len());
            prop_assert_eq!(h.occupied(), keys.len());
            for (i, k) in keys.iter().enumerate() {
                let mut found = Vec::new();
                h.for_each_match(&[&[*k]], 0, &[&keys], |b| found.push(b));
                prop_assert!(found.contains(&i));
                prop_assert_eq!(found.len(), keys.iter().filter(|x| *x == k).count());
            }
        }
    }
}
