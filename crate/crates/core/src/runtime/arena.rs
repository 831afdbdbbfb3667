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


//! Bump allocation of register storage.
//!
//! All value and index registers of one program run live in a single
//! region and are addressed by offset, so the region may grow without
//! invalidating them. Resetting only rewinds the bump pointer.

use std::ops::Range;

use crate::value::Cell;

pub const GROWTH: f64 = 1.5;

#[derive(Debug, Default)]
pub struct Arena {
    buf: Vec<Cell>,
    top: usize,
    high_water: usize,
    growths: u64,
}

impl Arena {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the offset of `n` fresh cells.
    pub fn alloc(&mut self, n: usize) -> usize {
        let off = self.top;
        self.top += n;
        if self.top > self.buf.len() {
            let len = self.top.max(self.buf.len() * 2);
            self.buf.resize(len, 0);
            self.growths += 1;
        }
        self.high_water = self.high_water.max(self.top);
        off
    }

    pub fn reset(&mut self) {
        self.top = 0;
    }

    pub fn used(&self) -> usize {
        self.top
    }

    /// Cells ever in use at once.
    pub fn high_water(&self) -> usize {
        self.high_water
    }

    /// Times the region had to be reallocated.
    pub fn growths(&self) -> u64 {
        self.growths
    }

    pub fn slice(&self, r: Range<usize>) -> &[Cell] {
        &self.buf[r]
    }

    /// Borrows pairwise disjoint ranges mutably and any ranges outside
    /// them immutably, in the order given.
    pub fn split(
        &mut self,
        muts: &[Range<usize>],
        shared: &[Range<usize>],
    ) -> (Vec<&mut [Cell]>, Vec<&[Cell]>) {
        let mut order: Vec<usize> = (0..muts.len()).collect();
        order.sort_by_key(|&i| muts[i].start);
        let mut out_mut: Vec<Option<&mut [Cell]>> = (0..muts.len()).map(|_| None).collect();
        let mut gaps: Vec<(usize, &[Cell])> = Vec::new();
        let mut rest: &mut [Cell] = &mut self.buf;
        let mut base = 0;
        for i in order {
            let r = &muts[i];
            assert!(r.start >= base, "overlapping destination registers");
            let (gap, tail) = rest.split_at_mut(r.start - base);
            let (m, tail) = tail.split_at_mut(r.len());
            gaps.push((base, gap));
            out_mut[i] = Some(m);
            rest = tail;
            base = r.end;
        }
        gaps.push((base, rest));
        let out_shared = shared
            .iter()
            .map(|r| {
                let k = gaps.partition_point(|(start, _)| *start <= r.start) - 1;
                let (start, gap) = gaps[k];
                assert!(
                    r.end <= start + gap.len() || r.is_empty(),
                    "source register overlaps a destination"
                );
                if r.is_empty() {
                    return &gap[..0];
                }
                &gap[r.start - start..r.end - start]
            })
            .collect();
        (out_mut.into_iter().map(Option::unwrap).collect(), out_shared)
    }
}

/// Per-site capacities remembered across program runs.
#[derive(Debug, Default, Clone)]
pub struct SiteCapacities {
    caps: Vec<usize>,
}

impl SiteCapacities {
    pub fn new(sites: usize) -> Self {
        Self { caps: vec![0; sites] }
    }

    /// Capacity to allocate at `site` for `n` rows, and whether the
    /// previous capacity sufficed.
    pub fn request(&mut self, site: usize, n: usize) -> (usize, bool) {
        if site >= self.caps.len() {
            self.caps.resize(site + 1, 0);
        }
        let cur = self.caps[site];
        if n <= cur {
            return (cur, true);
        }
        let cap = ((n as f64 * GROWTH).ceil() as usize).max(n);
        self.caps[site] = cap;
        (cap, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_and_reset() {
        let mut a = Arena::new();
        assert_eq!(a.alloc(10), 0);
        assert_eq!(a.alloc(5), 10);
        assert_eq!(a.growths(), 2);
        a.reset();
        assert_eq!(a.alloc(15), 0);
        assert_eq!(a.growths(), 2);
        assert_eq!(a.high_water(), 15);
    }

    #[test]
    fn growth_within_reused_capacity() {
        let mut s = SiteCapacities::new(1);
        assert_eq!(s.request(0, 10), (15, false));
        assert_eq!(s.request(0, 14), (15, true));
        assert_eq!(s.request(0, 16), (24, false));
    }

    #[test]
    fn split_gives_disjoint_views() {
        let mut a = Arena::new();
        a.alloc(12);
        let (mut m, s) = a.split(&[6..9, 0..3], &[3..6, 9..12, 3..5, 10..10]);
        m[0].copy_from_slice(&[1, 2, 3]);
        m[1][0] = 9;
        assert_eq!(s[0].len(), 3);
        assert_eq!(s[2].len(), 2);
        assert_eq!(s[3].len(), 0);
        assert_eq!(a.slice(0..12), &[9, 0, 0, 0, 0, 0, 1, 2, 3, 0, 0, 0]);
    }

    #[test]
    #[should_panic(expected = "overlaps")]
    fn overlapping_source_is_rejected() {
        let mut a = Arena::new();
        a.alloc(6);
        let _ = a.split(&[0..3, 3..3], &[2..4, 5..5]);
    }
}
