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


//! Data-parallel kernels behind the APM instructions.
//!
//! Kernels that produce a data-dependent number of rows run in two passes
//! over fixed row chunks: count per chunk, prefix-sum the counts, then
//! write each chunk into its own output segment. Output order is therefore
//! independent of the thread count.

use std::cmp::Ordering;

use rayon::prelude::*;
use smallvec::SmallVec;
use thiserror::Error;

use super::bytecode::BytecodeProgram;
use super::hash::HashIndex;
use crate::provenance::Provenance;
use crate::value::{Cell, Value, ValueKind};

const MIN_CHUNK: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("{op}: {rows} rows exceed the allocated capacity {capacity}")]
    Overflow {
        op: &'static str,
        rows: usize,
        capacity: usize,
    },
    #[error("{op}: row index {index} out of range for {len} rows")]
    OutOfRange {
        op: &'static str,
        index: u64,
        len: usize,
    },
    #[error("join: probe row {row} found {found} matches but count said {expected}")]
    CountMismatch {
        row: usize,
        found: usize,
        expected: usize,
    },
}

/// Chunk boundaries `[0, .., n]`.
pub fn plan(n: usize) -> Vec<usize> {
    let parts = rayon::current_num_threads() * 4;
    let size = n.div_ceil(parts.max(1)).max(MIN_CHUNK);
    let mut b: Vec<usize> = (0..n).step_by(size).collect();
    b.push(n);
    if b.len() == 1 {
        b.insert(0, 0);
    }
    b
}

fn split_by<'a, X>(mut buf: &'a mut [X], bounds: &[usize]) -> Vec<&'a mut [X]> {
    let mut out = Vec::with_capacity(bounds.len().saturating_sub(1));
    for w in bounds.windows(2) {
        let (head, tail) = std::mem::take(&mut buf).split_at_mut(w[1] - w[0]);
        out.push(head);
        buf = tail;
    }
    out
}

/// A table viewed as columns plus tags. `n` is the row count.
pub struct Tab<'a, T> {
    pub cols: &'a [&'a [Cell]],
    pub tags: &'a [T],
    pub n: usize,
}

impl<T> Clone for Tab<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Tab<'_, T> {}

impl<'a, T> Tab<'a, T> {
    pub fn new(cols: &'a [&'a [Cell]], tags: &'a [T]) -> Self {
        Self {
            cols,
            tags,
            n: tags.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn cmp(&self, i: usize, other: &Tab<'_, T>, j: usize) -> Ordering {
        for (a, b) in self.cols.iter().zip(other.cols.iter()) {
            match a[i].cmp(&b[j]) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        Ordering::Equal
    }

    /// First row not less than row `j` of `other`.
    fn lower_bound(&self, other: &Tab<'_, T>, j: usize) -> usize {
        let (mut lo, mut hi) = (0, self.n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.cmp(mid, other, j) == Ordering::Less {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn find(&self, other: &Tab<'_, T>, j: usize) -> Option<usize> {
        let i = self.lower_bound(other, j);
        (i < self.n && self.cmp(i, other, j) == Ordering::Equal).then_some(i)
    }
}

/// Destination of a table-producing kernel: capacity-sized columns and a
/// tag vector whose capacity was reserved by the allocation.
pub struct Out<'a, T> {
    pub cols: Vec<&'a mut [Cell]>,
    pub tags: Option<&'a mut Vec<T>>,
}

impl<'a, T: Clone + Send + Sync> Out<'a, T> {
    fn capacity(&self) -> usize {
        let c = self.cols.iter().map(|c| c.len()).min();
        let t = self.tags.as_ref().map(|t| t.capacity());
        match (c, t) {
            (Some(c), Some(t)) => c.min(t),
            (Some(c), None) => c,
            (None, Some(t)) => t,
            (None, None) => usize::MAX,
        }
    }

    /// Sizes the output for `total` rows and splits it at `bounds`.
    fn segments(self, op: &'static str, bounds: &[usize], zero: &T) -> Result<Vec<Seg<'a, T>>, KernelError> {
        let total = *bounds.last().unwrap();
        let capacity = self.capacity();
        if total > capacity {
            return Err(KernelError::Overflow {
                op,
                rows: total,
                capacity,
            });
        }
        let k = bounds.len() - 1;
        let mut segs: Vec<Seg<'a, T>> = (0..k)
            .map(|_| Seg {
                cols: Vec::new(),
                tags: None,
            })
            .collect();
        for col in self.cols {
            for (s, part) in segs.iter_mut().zip(split_by(col, bounds)) {
                s.cols.push(part);
            }
        }
        if let Some(tags) = self.tags {
            tags.clear();
            tags.resize(total, zero.clone());
            for (s, part) in segs.iter_mut().zip(split_by(tags.as_mut_slice(), bounds)) {
                s.tags = Some(part);
            }
        }
        Ok(segs)
    }
}

struct Seg<'a, T> {
    cols: Vec<&'a mut [Cell]>,
    tags: Option<&'a mut [T]>,
}

impl<T: Clone> Seg<'_, T> {
    #[inline]
    fn put(&mut self, k: usize, src: &Tab<'_, T>, row: usize, tag: Option<T>) {
        for (d, s) in self.cols.iter_mut().zip(src.cols) {
            d[k] = s[row];
        }
        if let Some(t) = &mut self.tags {
            t[k] = tag.unwrap_or_else(|| src.tags[row].clone());
        }
    }
}

fn offsets(counts: &[usize]) -> Vec<usize> {
    let mut b = Vec::with_capacity(counts.len() + 1);
    let mut acc = 0;
    b.push(0);
    for c in counts {
        acc += c;
        b.push(acc);
    }
    b
}

pub fn permute(dsts: &mut [&mut [Cell]], perm: &[usize], srcs: &[&[Cell]], n: usize) {
    for (d, &p) in dsts.iter_mut().zip(perm) {
        d[..n]
            .par_chunks_mut(MIN_CHUNK * 8)
            .zip(srcs[p][..n].par_chunks(MIN_CHUNK * 8))
            .for_each(|(d, s)| d.copy_from_slice(s));
    }
}

/// Output columns and mask of one chunk.
type Segment<'a> = (Vec<&'a mut [Cell]>, Option<&'a mut [Cell]>);

/// Runs `bc` over rows `0..n`. Returns the number of rows whose function
/// failed; those rows get mask 0.
pub fn eval_bytecode(
    bc: &BytecodeProgram,
    srcs: &[&[Cell]],
    n: usize,
    dsts: Vec<&mut [Cell]>,
    mask: Option<&mut [Cell]>,
) -> u64 {
    let bounds = plan(n);
    let width = dsts.len();
    let truth_output = bc.outputs() > width;
    let mut segs: Vec<Segment<'_>> =
        (0..bounds.len() - 1).map(|_| (Vec::new(), None)).collect();
    for col in dsts {
        for (s, part) in segs.iter_mut().zip(split_by(&mut col[..n], &bounds)) {
            s.0.push(part);
        }
    }
    if let Some(m) = mask {
        for (s, part) in segs.iter_mut().zip(split_by(&mut m[..n], &bounds)) {
            s.1 = Some(part);
        }
    }
    segs.into_par_iter()
        .enumerate()
        .map(|(c, (mut cols, mut mask))| {
            let start = bounds[c];
            let mut out: SmallVec<[Cell; 8]> = SmallVec::from_elem(0, bc.outputs());
            let mut failed = 0;
            for k in 0..bounds[c + 1] - start {
                let row = start + k;
                let ok = bc.run_row(|col| srcs[col][row], &mut out);
                for (d, v) in cols.iter_mut().zip(&out) {
                    d[k] = if ok { *v } else { 0 };
                }
                let keep = ok && (!truth_output || Value::from_cell(ValueKind::Int, out[width]).as_bool());
                if !ok {
                    failed += 1;
                }
                if let Some(m) = &mut mask {
                    m[k] = keep as Cell;
                }
            }
            failed
        })
        .sum()
}

pub fn gather<X: Clone + Send + Sync>(
    op: &'static str,
    idx: &[Cell],
    src: &[X],
    dst: &mut [X],
) -> Result<(), KernelError> {
    if let Some(&bad) = idx.par_iter().find_any(|&&i| i as usize >= src.len()) {
        return Err(KernelError::OutOfRange {
            op,
            index: bad,
            len: src.len(),
        });
    }
    dst[..idx.len()]
        .par_iter_mut()
        .with_min_len(MIN_CHUNK)
        .zip(idx)
        .for_each(|(d, &i)| *d = src[i as usize].clone());
    Ok(())
}

pub fn gather_reduce<P: Provenance>(
    prov: &P,
    ia: &[Cell],
    ib: &[Cell],
    a: &[P::Tag],
    b: &[P::Tag],
    dst: &mut Vec<P::Tag>,
) -> Result<(), KernelError> {
    for (idx, src) in [(ia, a), (ib, b)] {
        if let Some(&bad) = idx.par_iter().find_any(|&&i| i as usize >= src.len()) {
            return Err(KernelError::OutOfRange {
                op: "gather<otimes>",
                index: bad,
                len: src.len(),
            });
        }
    }
    let n = ia.len();
    if n > dst.capacity() {
        return Err(KernelError::Overflow {
            op: "gather<otimes>",
            rows: n,
            capacity: dst.capacity(),
        });
    }
    dst.clear();
    dst.resize(n, prov.zero());
    dst.par_iter_mut()
        .with_min_len(MIN_CHUNK)
        .zip(ia.par_iter().zip(ib))
        .for_each(|(d, (&x, &y))| *d = prov.otimes(&a[x as usize], &b[y as usize]));
    Ok(())
}

pub fn count(index: &HashIndex, probe: &[&[Cell]], n: usize, build: &[&[Cell]], dst: &mut [Cell]) {
    dst[..n]
        .par_iter_mut()
        .with_min_len(MIN_CHUNK)
        .enumerate()
        .for_each(|(row, d)| *d = index.count(probe, row, build) as Cell);
}

/// Exclusive prefix sum of `src` into `dst`; returns the total.
pub fn scan(src: &[Cell], dst: &mut [Cell]) -> Cell {
    let n = src.len();
    let bounds = plan(n);
    let sums: Vec<Cell> = bounds
        .par_windows(2)
        .map(|w| src[w[0]..w[1]].iter().sum())
        .collect();
    let mut starts = Vec::with_capacity(sums.len());
    let mut acc: Cell = 0;
    for s in &sums {
        starts.push(acc);
        acc += s;
    }
    split_by(&mut dst[..n], &bounds)
        .into_par_iter()
        .enumerate()
        .for_each(|(c, seg)| {
            let mut run = starts[c];
            for (d, s) in seg.iter_mut().zip(&src[bounds[c]..bounds[c + 1]]) {
                *d = run;
                run += s;
            }
        });
    acc
}

/// Writes every matching (build row, probe row) pair, ordered by probe row
/// and then build row.
#[allow(clippy::too_many_arguments)]
pub fn join(
    index: &HashIndex,
    probe: &[&[Cell]],
    n: usize,
    build: &[&[Cell]],
    counts: &[Cell],
    offs: &[Cell],
    total: usize,
    out_build: &mut [Cell],
    out_probe: &mut [Cell],
) -> Result<(), KernelError> {
    let cap = out_build.len().min(out_probe.len());
    if total > cap {
        return Err(KernelError::Overflow {
            op: "join",
            rows: total,
            capacity: cap,
        });
    }
    let rows = plan(n);
    let bounds: Vec<usize> = rows
        .iter()
        .map(|&r| if r == n { total } else { offs[r] as usize })
        .collect();
    let a = split_by(&mut out_build[..total], &bounds);
    let b = split_by(&mut out_probe[..total], &bounds);
    a.into_par_iter()
        .zip(b)
        .enumerate()
        .try_for_each(|(c, (sa, sb))| {
            let base = bounds[c];
            for row in rows[c]..rows[c + 1] {
                let start = offs[row] as usize - base;
                let mut k = start;
                index.for_each_match(probe, row, build, |m| {
                    if k < sa.len() {
                        sa[k] = m as Cell;
                        sb[k] = row as Cell;
                    }
                    k += 1;
                });
                if k - start != counts[row] as usize {
                    return Err(KernelError::CountMismatch {
                        row,
                        found: k - start,
                        expected: counts[row] as usize,
                    });
                }
                sa[start..k].sort_unstable();
            }
            Ok(())
        })
}

/// Stable lexicographic sort order of rows `0..n`.
pub fn sort_order(cols: &[&[Cell]], n: usize, idx: &mut Vec<Cell>) {
    idx.clear();
    idx.extend(0..n as Cell);
    idx.par_sort_unstable_by(|&a, &b| {
        for c in cols {
            match c[a as usize].cmp(&c[b as usize]) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        a.cmp(&b)
    });
}

pub fn is_sorted(cols: &[&[Cell]], n: usize) -> bool {
    (1..n).into_par_iter().with_min_len(MIN_CHUNK).all(|i| {
        for c in cols {
            match c[i - 1].cmp(&c[i]) {
                Ordering::Equal => {}
                o => return o == Ordering::Less,
            }
        }
        true
    })
}

/// Collapses runs of equal rows in a sorted table, combining tags with ⊕.
pub fn unique<P: Provenance>(prov: &P, src: Tab<'_, P::Tag>, out: Out<'_, P::Tag>) -> Result<usize, KernelError> {
    let n = src.len();
    let same = |i: usize| i > 0 && src.cmp(i - 1, &src, i) == Ordering::Equal;
    let mut starts = plan(n);
    for s in starts.iter_mut() {
        while *s < n && same(*s) {
            *s += 1;
        }
    }
    starts.dedup();
    let counts: Vec<usize> = starts
        .par_windows(2)
        .map(|w| (w[0]..w[1]).filter(|&i| !same(i)).count())
        .collect();
    let bounds = offsets(&counts);
    let total = *bounds.last().unwrap();
    let segs = out.segments("unique", &bounds, &prov.zero())?;
    segs.into_par_iter().enumerate().for_each(|(c, mut seg)| {
        let mut k = 0;
        let mut i = starts[c];
        while i < starts[c + 1] {
            let mut tag = src.tags[i].clone();
            let mut j = i + 1;
            while j < n && same(j) {
                tag = prov.oplus(&tag, &src.tags[j]);
                j += 1;
            }
            seg.put(k, &src, i, Some(tag));
            k += 1;
            i = j;
        }
    });
    Ok(total)
}

/// Row split `(i, j)` such that the first `k` merged rows are `a[..i]` and
/// `b[..j]`, rows of `a` first on ties.
fn co_rank<T>(k: usize, a: &Tab<'_, T>, b: &Tab<'_, T>) -> (usize, usize) {
    let (n, m) = (a.len(), b.len());
    let (mut lo, mut hi) = (k.saturating_sub(m), k.min(n));
    loop {
        let i = (lo + hi) / 2;
        let j = k - i;
        if i < n && j > 0 && b.cmp(j - 1, a, i) != Ordering::Less {
            lo = i + 1;
        } else if i > 0 && j < m && a.cmp(i - 1, b, j) == Ordering::Greater {
            hi = i - 1;
        } else {
            return (i, j);
        }
    }
}

fn merge_splits<T>(a: &Tab<'_, T>, b: &Tab<'_, T>) -> Vec<(usize, usize)> {
    plan(a.len() + b.len())
        .into_iter()
        .map(|k| co_rank(k, a, b))
        .collect()
}

/// Merges two sorted tables keeping duplicates.
pub fn merge<T: Clone + Send + Sync>(
    a: Tab<'_, T>,
    b: Tab<'_, T>,
    out: Out<'_, T>,
    zero: &T,
) -> Result<usize, KernelError> {
    let splits = merge_splits(&a, &b);
    let bounds: Vec<usize> = splits.iter().map(|(i, j)| i + j).collect();
    let segs = out.segments("merge", &bounds, zero)?;
    segs.into_par_iter().enumerate().for_each(|(c, mut seg)| {
        let ((mut i, mut j), (ie, je)) = (splits[c], splits[c + 1]);
        let mut k = 0;
        while i < ie || j < je {
            let take_a = j == je || (i < ie && a.cmp(i, &b, j) != Ordering::Greater);
            if take_a {
                seg.put(k, &a, i, None);
                i += 1;
            } else {
                seg.put(k, &b, j, None);
                j += 1;
            }
            k += 1;
        }
    });
    Ok(a.len() + b.len())
}

enum DiffStep {
    Old(usize),
    New(usize),
    Both(usize, usize),
}

fn diff_walk<T>(old: &Tab<'_, T>, cand: &Tab<'_, T>, (mut i, mut j): (usize, usize), (ie, je): (usize, usize), mut f: impl FnMut(DiffStep)) {
    while i < ie || j < je {
        let ord = if j == je {
            Ordering::Less
        } else if i == ie {
            Ordering::Greater
        } else {
            old.cmp(i, cand, j)
        };
        match ord {
            Ordering::Less => {
                f(DiffStep::Old(i));
                i += 1;
            }
            Ordering::Greater => {
                f(DiffStep::New(j));
                j += 1;
            }
            Ordering::Equal => {
                f(DiffStep::Both(i, j));
                i += 1;
                j += 1;
            }
        }
    }
}

/// Folds sorted unique candidates into a sorted unique table. Returns the
/// row counts of the kept and fresh outputs.
pub fn diff<P: Provenance>(
    prov: &P,
    old: Tab<'_, P::Tag>,
    cand: Tab<'_, P::Tag>,
    kept: Out<'_, P::Tag>,
    fresh: Out<'_, P::Tag>,
) -> Result<(usize, usize), KernelError> {
    let mut splits = merge_splits(&old, &cand);
    for s in splits.iter_mut() {
        let (i, j) = *s;
        if i > 0 && j < cand.len() && old.cmp(i - 1, &cand, j) == Ordering::Equal {
            *s = (i, j + 1);
        }
    }
    let new_enters = |j: usize| !prov.discard(&cand.tags[j]);
    let counts: Vec<(usize, usize)> = splits
        .par_windows(2)
        .map(|w| {
            let (mut nk, mut nf) = (0, 0);
            diff_walk(&old, &cand, w[0], w[1], |s| match s {
                DiffStep::Old(_) => nk += 1,
                DiffStep::New(j) => nf += usize::from(new_enters(j)),
                DiffStep::Both(i, j) => {
                    if prov.saturated(&old.tags[i], &cand.tags[j]) {
                        nk += 1
                    } else {
                        nf += 1
                    }
                }
            });
            (nk, nf)
        })
        .collect();
    let kb = offsets(&counts.iter().map(|c| c.0).collect::<Vec<_>>());
    let fb = offsets(&counts.iter().map(|c| c.1).collect::<Vec<_>>());
    let zero = prov.zero();
    let ks = kept.segments("diff", &kb, &zero)?;
    let fs = fresh.segments("diff", &fb, &zero)?;
    ks.into_par_iter()
        .zip(fs)
        .enumerate()
        .for_each(|(c, (mut k, mut f))| {
            let (mut a, mut b) = (0, 0);
            diff_walk(&old, &cand, splits[c], splits[c + 1], |s| match s {
                DiffStep::Old(i) => {
                    k.put(a, &old, i, None);
                    a += 1;
                }
                DiffStep::New(j) => {
                    if new_enters(j) {
                        f.put(b, &cand, j, None);
                        b += 1;
                    }
                }
                DiffStep::Both(i, j) => {
                    let tag = prov.oplus(&old.tags[i], &cand.tags[j]);
                    if prov.saturated(&old.tags[i], &cand.tags[j]) {
                        k.put(a, &old, i, Some(tag));
                        a += 1;
                    } else {
                        f.put(b, &cand, j, Some(tag));
                        b += 1;
                    }
                }
            });
        });
    Ok((*kb.last().unwrap(), *fb.last().unwrap()))
}

/// Keeps rows `i` with `keep(i)`, in order.
fn filter_rows<T: Clone + Send + Sync>(
    op: &'static str,
    src: Tab<'_, T>,
    keep: impl Fn(usize) -> bool + Sync,
    out: Out<'_, T>,
    zero: &T,
) -> Result<usize, KernelError> {
    let rows = plan(src.len());
    let counts: Vec<usize> = rows
        .par_windows(2)
        .map(|w| (w[0]..w[1]).filter(|&i| keep(i)).count())
        .collect();
    let bounds = offsets(&counts);
    let total = *bounds.last().unwrap();
    let segs = out.segments(op, &bounds, zero)?;
    segs.into_par_iter().enumerate().for_each(|(c, mut seg)| {
        let mut k = 0;
        for i in rows[c]..rows[c + 1] {
            if keep(i) {
                seg.put(k, &src, i, None);
                k += 1;
            }
        }
    });
    Ok(total)
}

pub fn compact<T: Clone + Send + Sync>(
    mask: &[Cell],
    src: Tab<'_, T>,
    out: Out<'_, T>,
    zero: &T,
) -> Result<usize, KernelError> {
    filter_rows("compact", src, |i| mask[i] != 0, out, zero)
}

/// Drops candidates whose tuple is already known, in one of the sorted
/// tables `against`, with a tag the candidate cannot improve.
pub fn prune<P: Provenance>(
    prov: &P,
    cand: Tab<'_, P::Tag>,
    against: &[Tab<'_, P::Tag>],
    out: Out<'_, P::Tag>,
) -> Result<(usize, u64), KernelError> {
    let keep = |i: usize| {
        !against.iter().any(|t| {
            t.find(&cand, i)
                .is_some_and(|r| prov.saturated(&t.tags[r], &cand.tags[i]))
        })
    };
    let kept = filter_rows("prune", cand, keep, out, &prov.zero())?;
    Ok((kept, (cand.len() - kept) as u64))
}

/// Concatenates tables.
pub fn concat<T: Clone + Send + Sync>(srcs: &[Tab<'_, T>], out: Out<'_, T>, zero: &T) -> Result<usize, KernelError> {
    let bounds = offsets(&srcs.iter().map(|s| s.len()).collect::<Vec<_>>());
    let total = *bounds.last().unwrap();
    let segs = out.segments("copy", &bounds, zero)?;
    segs.into_par_iter().zip(srcs).for_each(|(seg, src)| {
        for (d, s) in seg.cols.into_iter().zip(src.cols) {
            d.copy_from_slice(&s[..src.n]);
        }
        if let Some(t) = seg.tags {
            t.clone_from_slice(&src.tags[..src.n]);
        }
    });
    Ok(total)
}
