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


//! The fixpoint driver and the APM interpreter.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::arena::{Arena, SiteCapacities};
use super::hash::{HashError, HashIndex};
use super::kernels::{self, KernelError, Out, Tab};
use crate::apm::{ApmProgram, EvalFn, Instr, Reg, RegKind, SizeExpr};
use crate::db::{Database, DbError};
use crate::provenance::{CounterSnapshot, Provenance};
use crate::value::Cell;

#[derive(Debug, Clone, PartialEq)]
pub struct ExecConfig {
    pub threads: usize,
    pub arena: bool,
    pub reuse: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            threads: 1,
            arena: true,
            reuse: true,
        }
    }
}

/// Code for one stratum. `init` runs once; `step` then runs until no
/// local relation has recent tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumCode {
    pub relations: Vec<String>,
    pub init: ApmProgram,
    pub step: Option<ApmProgram>,
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error("{program}, instruction {at}: {message}")]
    Internal {
        program: String,
        at: usize,
        message: String,
    },
    #[error("cannot start worker threads: {0}")]
    Threads(String),
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct IterationStats {
    pub stratum: usize,
    pub iteration: usize,
    pub fresh_allocations: u64,
    pub nanos: u64,
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct ExecStats {
    pub iterations: usize,
    pub iterations_per_stratum: Vec<usize>,
    pub kernel_nanos: BTreeMap<String, u64>,
    /// Register storage obtained from the system allocator.
    pub fresh_allocations: u64,
    /// Growth of relation partition storage on `store`.
    pub partition_reallocations: u64,
    pub reuse_hits: u64,
    /// Largest arena footprint, in cells.
    pub arena_high_water: usize,
    /// Rows dropped because a function had no value for them.
    pub dropped_rows: u64,
    pub pruned_rows: u64,
    pub hash_resizes: u64,
    pub static_skips: u64,
    pub per_iteration: Vec<IterationStats>,
    pub provenance: CounterSnapshot,
}

/// Value columns and tags of one input table.
type Part<'a, T> = (Vec<&'a [Cell]>, &'a [T]);

enum Data<T> {
    Empty,
    Arena(usize),
    Owned(Vec<Cell>),
    Tags(Vec<T>),
    Hash(HashIndex),
}

struct RegState<T> {
    data: Data<T>,
    cap: usize,
    len: usize,
    total: Cell,
    written: bool,
}

impl<T> Default for RegState<T> {
    fn default() -> Self {
        Self {
            data: Data::Empty,
            cap: 0,
            len: 0,
            total: 0,
            written: false,
        }
    }
}

/// Registers and retained buffers of one program across its runs.
pub struct ProgramState<T> {
    regs: Vec<RegState<T>>,
    caps: SiteCapacities,
    col_pool: Vec<Vec<Cell>>,
    tag_pool: Vec<Vec<T>>,
    hash_pool: Vec<HashIndex>,
    ran: bool,
}

impl<T> ProgramState<T> {
    pub fn new(p: &ApmProgram) -> Self {
        let n = p.kinds.len();
        Self {
            regs: (0..n).map(|_| RegState::default()).collect(),
            caps: SiteCapacities::new(n),
            col_pool: (0..n).map(|_| Vec::new()).collect(),
            tag_pool: (0..n).map(|_| Vec::new()).collect(),
            hash_pool: (0..n).map(|_| HashIndex::new()).collect(),
            ran: false,
        }
    }
}

enum Src<'a, T> {
    Col(&'a [Cell]),
    Tags(&'a [T]),
    Hash(&'a HashIndex),
}

enum Dst<'a, T> {
    Col(&'a mut [Cell]),
    Tags(&'a mut Vec<T>),
    Hash(&'a mut HashIndex),
}

/// Operand views for one instruction.
struct Io<'a, T> {
    src_regs: Vec<Reg>,
    srcs: Vec<Src<'a, T>>,
    dst_regs: Vec<Reg>,
    /// Row counts requested by each destination's allocation.
    dst_lens: Vec<usize>,
    dsts: Vec<Option<Dst<'a, T>>>,
    totals: Vec<Cell>,
}

impl<'a, T> Io<'a, T> {
    fn pos(&self, r: Reg) -> usize {
        self.src_regs.iter().position(|x| *x == r).expect("operand")
    }

    fn col(&self, r: Reg) -> &'a [Cell] {
        match self.srcs[self.pos(r)] {
            Src::Col(c) => c,
            _ => panic!("register {} is not a column", r.0),
        }
    }

    fn total(&self, r: Reg) -> Cell {
        self.totals[self.pos(r)]
    }

    fn tags(&self, r: Reg) -> &'a [T] {
        match self.srcs[self.pos(r)] {
            Src::Tags(t) => t,
            _ => panic!("register {} is not a tag register", r.0),
        }
    }

    fn hash(&self, r: Reg) -> &'a HashIndex {
        match self.srcs[self.pos(r)] {
            Src::Hash(h) => h,
            _ => panic!("register {} is not a hash index", r.0),
        }
    }

    fn rows(&self, r: Reg) -> usize {
        match self.srcs[self.pos(r)] {
            Src::Col(c) => c.len(),
            Src::Tags(t) => t.len(),
            Src::Hash(h) => h.rows(),
        }
    }

    fn take(&mut self, r: Reg) -> Dst<'a, T> {
        let k = self.dst_regs.iter().position(|x| *x == r).expect("destination");
        self.dsts[k].take().expect("destination taken twice")
    }

    fn take_col(&mut self, r: Reg) -> &'a mut [Cell] {
        match self.take(r) {
            Dst::Col(c) => c,
            _ => panic!("register {} is not a column", r.0),
        }
    }

    fn take_tags(&mut self, r: Reg) -> &'a mut Vec<T> {
        match self.take(r) {
            Dst::Tags(t) => t,
            _ => panic!("register {} is not a tag register", r.0),
        }
    }

    fn take_hash(&mut self, r: Reg) -> &'a mut HashIndex {
        match self.take(r) {
            Dst::Hash(h) => h,
            _ => panic!("register {} is not a hash index", r.0),
        }
    }

    /// Value columns of a table (all registers but the tag).
    fn cols(&self, table: &[Reg]) -> Vec<&'a [Cell]> {
        table[..table.len() - 1].iter().map(|r| self.col(*r)).collect()
    }

    fn out(&mut self, table: &[Reg]) -> Out<'a, T> {
        let (tag, values) = table.split_last().expect("empty table");
        Out {
            cols: values.iter().map(|r| self.take_col(*r)).collect(),
            tags: Some(self.take_tags(*tag)),
        }
    }
}

/// Sizes written by an instruction.
#[derive(Default)]
struct Written {
    lens: Vec<(Reg, usize)>,
    totals: Vec<(Reg, Cell)>,
}

impl Written {
    fn all(regs: &[Reg], n: usize) -> Self {
        Self {
            lens: regs.iter().map(|r| (*r, n)).collect(),
            totals: Vec::new(),
        }
    }
}

pub struct Machine<'p, P: Provenance> {
    prov: &'p P,
    cfg: ExecConfig,
    arena: Arena,
    scratch: Vec<Cell>,
    pub stats: ExecStats,
}

impl<'p, P: Provenance> Machine<'p, P> {
    pub fn new(prov: &'p P, cfg: ExecConfig) -> Self {
        Self {
            prov,
            cfg,
            arena: Arena::new(),
            scratch: Vec::new(),
            stats: ExecStats::default(),
        }
    }

    fn internal(p: &ApmProgram, at: usize, message: impl Into<String>) -> ExecError {
        ExecError::Internal {
            program: p.name.clone(),
            at,
            message: message.into(),
        }
    }

    fn size(
        &self,
        p: &ApmProgram,
        at: usize,
        s: &SizeExpr,
        st: &ProgramState<P::Tag>,
        db: &Database<P::Tag>,
    ) -> Result<usize, ExecError> {
        let reg = |r: &Reg| -> Result<&RegState<P::Tag>, ExecError> {
            let rs = &st.regs[r.index()];
            if rs.written {
                Ok(rs)
            } else {
                Err(Self::internal(p, at, format!("size of unwritten {}", p.reg_name(*r))))
            }
        };
        Ok(match s {
            SizeExpr::Size(r) => reg(r)?.len,
            SizeExpr::Rel(rel) => db.relation(&rel.relation)?.partition(rel.partition).len(),
            SizeExpr::Sum(parts) => {
                let mut n = 0;
                for x in parts {
                    n += self.size(p, at, x, st, db)?;
                }
                n
            }
            SizeExpr::Scaled(r, o) => super::hash::capacity_for(reg(r)?.len, *o),
            SizeExpr::Last(r) => reg(r)?.total as usize,
            SizeExpr::Const(n) => *n,
        })
    }

    fn alloc(&mut self, p: &ApmProgram, r: Reg, n: usize, st: &mut ProgramState<P::Tag>) {
        let kind = p.kind(r);
        let is_static = p.is_static(r);
        let i = r.index();
        let (cap, hit) = if self.cfg.reuse && !is_static {
            st.caps.request(i, n)
        } else {
            (n, false)
        };
        let mut fresh = false;
        let data = match kind {
            RegKind::Value | RegKind::Index => {
                if self.cfg.arena && !is_static {
                    let before = self.arena.growths();
                    let off = self.arena.alloc(cap);
                    fresh = self.arena.growths() != before;
                    Data::Arena(off)
                } else if self.cfg.reuse && !is_static {
                    let mut v = std::mem::take(&mut st.col_pool[i]);
                    if v.len() < cap {
                        fresh = v.capacity() < cap;
                        v.resize(cap, 0);
                    }
                    Data::Owned(v)
                } else {
                    fresh = cap > 0;
                    Data::Owned(vec![0; cap])
                }
            }
            RegKind::Tag => {
                if self.cfg.reuse && !is_static {
                    let mut v = std::mem::take(&mut st.tag_pool[i]);
                    v.clear();
                    if v.capacity() < cap {
                        fresh = true;
                        v.reserve_exact(cap);
                    }
                    Data::Tags(v)
                } else {
                    fresh = cap > 0;
                    Data::Tags(Vec::with_capacity(cap))
                }
            }
            RegKind::Hash => {
                let mut h = if self.cfg.reuse && !is_static {
                    std::mem::take(&mut st.hash_pool[i])
                } else {
                    HashIndex::new()
                };
                fresh = h.reserve(n);
                Data::Hash(h)
            }
        };
        if fresh {
            self.stats.fresh_allocations += 1;
        } else if self.cfg.reuse && (hit || kind == RegKind::Hash) && n > 0 {
            self.stats.reuse_hits += 1;
        }
        st.regs[i] = RegState {
            data,
            cap: if kind == RegKind::Hash { n } else { cap },
            len: n,
            total: 0,
            written: false,
        };
    }

    /// Returns every non-static register's storage to the pools.
    fn release(&mut self, p: &ApmProgram, st: &mut ProgramState<P::Tag>) {
        for (i, rs) in st.regs.iter_mut().enumerate() {
            if p.is_static(Reg(i as u32)) {
                continue;
            }
            let old = std::mem::take(rs);
            if !self.cfg.reuse {
                continue;
            }
            match old.data {
                Data::Owned(v) => st.col_pool[i] = v,
                Data::Tags(mut v) => {
                    v.clear();
                    st.tag_pool[i] = v;
                }
                Data::Hash(h) => st.hash_pool[i] = h,
                Data::Arena(_) | Data::Empty => {}
            }
        }
        self.arena.reset();
    }

    /// Runs `p` once against `db`.
    pub fn run(
        &mut self,
        p: &ApmProgram,
        st: &mut ProgramState<P::Tag>,
        db: &mut Database<P::Tag>,
    ) -> Result<(), ExecError> {
        let skip_static = st.ran;
        let result = (|| {
            for (at, instr) in p.instrs.iter().enumerate() {
                if skip_static && p.is_static_instr(instr) {
                    self.stats.static_skips += 1;
                    continue;
                }
                let t0 = Instant::now();
                self.step(p, at, instr, st, db)?;
                *self.stats.kernel_nanos.entry(instr.name().to_string()).or_default() +=
                    t0.elapsed().as_nanos() as u64;
            }
            Ok(())
        })();
        self.stats.arena_high_water = self.stats.arena_high_water.max(self.arena.high_water());
        self.release(p, st);
        st.ran = true;
        result
    }

    fn step(
        &mut self,
        p: &ApmProgram,
        at: usize,
        instr: &Instr,
        st: &mut ProgramState<P::Tag>,
        db: &mut Database<P::Tag>,
    ) -> Result<(), ExecError> {
        if let Instr::Alloc { dsts, size } = instr {
            let n = self.size(p, at, size, st, db)?;
            for &r in dsts {
                self.alloc(p, r, n, st);
            }
            return Ok(());
        }
        let defs = instr.defs();
        let uses = instr.uses();
        for &r in &uses {
            if !st.regs[r.index()].written {
                return Err(Self::internal(p, at, format!("{} read before write", p.reg_name(r))));
            }
        }
        for &r in &defs {
            let rs = &st.regs[r.index()];
            if rs.written || matches!(rs.data, Data::Empty) {
                return Err(Self::internal(p, at, format!("{} not allocated or rewritten", p.reg_name(r))));
            }
        }

        // Lift destination storage out of the register file, then borrow
        // sources from what remains.
        let mut taken: Vec<RegState<P::Tag>> = defs
            .iter()
            .map(|r| std::mem::take(&mut st.regs[r.index()]))
            .collect();
        let written = {
            let mut muts = Vec::new();
            for rs in &taken {
                if let Data::Arena(off) = rs.data {
                    muts.push(off..off + rs.cap);
                }
            }
            let mut shared = Vec::new();
            for r in &uses {
                let rs = &st.regs[r.index()];
                if let Data::Arena(off) = rs.data {
                    shared.push(off..off + rs.len);
                }
            }
            let (mut mv, sv) = self.arena.split(&muts, &shared);
            let mut sv = sv.into_iter();
            let srcs: Vec<Src<'_, P::Tag>> = uses
                .iter()
                .map(|r| {
                    let rs = &st.regs[r.index()];
                    match &rs.data {
                        Data::Arena(_) => Src::Col(sv.next().unwrap()),
                        Data::Owned(v) => Src::Col(&v[..rs.len]),
                        Data::Tags(t) => Src::Tags(t),
                        Data::Hash(h) => Src::Hash(h),
                        Data::Empty => unreachable!(),
                    }
                })
                .collect();
            let totals = uses.iter().map(|r| st.regs[r.index()].total).collect();
            let dst_lens = taken.iter().map(|rs| rs.len).collect();
            let mut mv_iter = mv.drain(..);
            let dsts: Vec<Option<Dst<'_, P::Tag>>> = taken
                .iter_mut()
                .map(|rs| {
                    let cap = rs.cap;
                    Some(match &mut rs.data {
                        Data::Arena(_) => Dst::Col(mv_iter.next().unwrap()),
                        Data::Owned(v) => Dst::Col(&mut v[..cap]),
                        Data::Tags(t) => Dst::Tags(t),
                        Data::Hash(h) => Dst::Hash(h),
                        Data::Empty => unreachable!(),
                    })
                })
                .collect();
            let mut io = Io {
                src_regs: uses.clone(),
                srcs,
                dst_regs: defs.clone(),
                dst_lens,
                dsts,
                totals,
            };
            let zero = self.prov.zero();
            exec_instr(self.prov, p, at, instr, &mut io, db, &zero, &mut self.scratch, &mut self.stats)?
        };
        for (rs, r) in taken.iter_mut().zip(&defs) {
            rs.written = true;
            if let Some((_, n)) = written.lens.iter().find(|(x, _)| x == r) {
                rs.len = *n;
            }
            if let Some((_, t)) = written.totals.iter().find(|(x, _)| x == r) {
                rs.total = *t;
            }
            if let Data::Tags(t) = &rs.data {
                rs.len = t.len();
            }
        }
        for (rs, r) in taken.into_iter().zip(&defs) {
            st.regs[r.index()] = rs;
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn exec_instr<'a, P: Provenance>(
    prov: &P,
    p: &ApmProgram,
    at: usize,
    instr: &Instr,
    io: &mut Io<'a, P::Tag>,
    db: &mut Database<P::Tag>,
    zero: &P::Tag,
    scratch: &mut Vec<Cell>,
    stats: &mut ExecStats,
) -> Result<Written, ExecError> {
    let internal = |m: String| Machine::<P>::internal(p, at, m);
    Ok(match instr {
        Instr::Alloc { .. } => unreachable!(),
        Instr::Load { rel, dsts } => {
            let table = db.relation(&rel.relation)?.partition(rel.partition);
            let n = table.len();
            let (tag, values) = dsts.split_last().unwrap();
            let batched = table.is_batched();
            if values.len() != table.arity() + usize::from(batched) {
                return Err(internal(format!("{rel} has a different arity")));
            }
            for (k, r) in values.iter().enumerate() {
                let d = io.take_col(*r);
                if d.len() < n {
                    return Err(KernelError::Overflow {
                        op: "load",
                        rows: n,
                        capacity: d.len(),
                    }
                    .into());
                }
                match (batched, k) {
                    (true, 0) => {
                        let s = table.sample_ids.as_ref().unwrap();
                        d[..n].par_iter_mut().zip(s).for_each(|(d, s)| *d = *s as Cell);
                    }
                    _ => d[..n].copy_from_slice(&table.columns[k - usize::from(batched)]),
                }
            }
            let t = io.take_tags(*tag);
            if t.capacity() < n {
                return Err(KernelError::Overflow {
                    op: "load",
                    rows: n,
                    capacity: t.capacity(),
                }
                .into());
            }
            t.clear();
            t.extend_from_slice(&table.tags);
            Written::all(dsts, n)
        }
        Instr::Store { rel, srcs } => {
            let cols = io.cols(srcs);
            let tags = io.tags(*srcs.last().unwrap());
            let n = tags.len();
            let table = db.relation_mut(&rel.relation)?.partition_mut(rel.partition);
            let batched = table.is_batched();
            if cols.len() != table.arity() + usize::from(batched) {
                return Err(internal(format!("{rel} has a different arity")));
            }
            let mut grew = false;
            let fill = |dst: &mut Vec<Cell>, src: &[Cell]| {
                let grew = dst.capacity() < n;
                dst.clear();
                dst.extend_from_slice(&src[..n]);
                grew
            };
            for (k, c) in cols.iter().enumerate() {
                match (batched, k) {
                    (true, 0) => {
                        let s = table.sample_ids.as_mut().unwrap();
                        grew |= s.capacity() < n;
                        s.clear();
                        s.extend(c[..n].iter().map(|&x| x as u8));
                    }
                    _ => grew |= fill(&mut table.columns[k - usize::from(batched)], c),
                }
            }
            grew |= table.tags.capacity() < n;
            table.tags.clear();
            table.tags.extend_from_slice(tags);
            if grew {
                stats.partition_reallocations += 1;
            }
            Written::default()
        }
        Instr::Eval {
            dsts,
            mask,
            func,
            srcs,
        } => {
            let src_cols: Vec<&[Cell]> = srcs.iter().map(|r| io.col(*r)).collect();
            let n = match src_cols.first() {
                Some(c) => c.len(),
                None => io.dst_lens[0],
            };
            let mut out: Vec<&mut [Cell]> = dsts.iter().map(|r| io.take_col(*r)).collect();
            let cap = out.iter().map(|c| c.len()).min().unwrap_or(usize::MAX);
            if n > cap {
                return Err(KernelError::Overflow {
                    op: "eval",
                    rows: n,
                    capacity: cap,
                }
                .into());
            }
            match func {
                EvalFn::Permute(perm) => {
                    kernels::permute(&mut out, perm, &src_cols, n);
                    if let Some(m) = mask {
                        io.take_col(*m)[..n].fill(1);
                    }
                }
                EvalFn::Bytecode(bc) => {
                    let m = mask.map(|m| io.take_col(m));
                    stats.dropped_rows += kernels::eval_bytecode(bc, &src_cols, n, out, m);
                }
            }
            let mut w = Written::all(dsts, n);
            w.lens.extend(mask.iter().map(|m| (*m, n)));
            w
        }
        Instr::Copy { dsts, srcs } => {
            let parts: Vec<Part<'_, P::Tag>> = srcs
                .iter()
                .map(|s| (io.cols(s), io.tags(*s.last().unwrap())))
                .collect();
            let tabs: Vec<Tab<'_, P::Tag>> = parts.iter().map(|(c, t)| Tab::new(c, t)).collect();
            let n = kernels::concat(&tabs, io.out(dsts), zero)?;
            Written::all(dsts, n)
        }
        Instr::Gather { dsts, index, srcs } => {
            let idx = io.col(*index);
            for (d, s) in dsts.iter().zip(srcs) {
                match p.kind(*s) {
                    RegKind::Tag => {
                        let src = io.tags(*s);
                        let dst = io.take_tags(*d);
                        if dst.capacity() < idx.len() {
                            return Err(KernelError::Overflow {
                                op: "gather",
                                rows: idx.len(),
                                capacity: dst.capacity(),
                            }
                            .into());
                        }
                        dst.clear();
                        dst.resize(idx.len(), zero.clone());
                        kernels::gather("gather", idx, src, dst)?;
                    }
                    _ => {
                        let dst = io.take_col(*d);
                        if dst.len() < idx.len() {
                            return Err(KernelError::Overflow {
                                op: "gather",
                                rows: idx.len(),
                                capacity: dst.len(),
                            }
                            .into());
                        }
                        kernels::gather("gather", idx, io.col(*s), dst)?;
                    }
                }
            }
            Written::all(dsts, idx.len())
        }
        Instr::GatherReduce { dst, indices, srcs } => {
            let (ia, ib) = (io.col(indices[0]), io.col(indices[1]));
            let (a, b) = (io.tags(srcs[0]), io.tags(srcs[1]));
            kernels::gather_reduce(prov, ia, ib, a, b, io.take_tags(*dst))?;
            Written::default()
        }
        Instr::Build { dst, keys } => {
            let h = io.take_hash(*dst);
            if keys.len() == 1 && p.kind(keys[0]) == RegKind::Tag {
                h.build_trivial(io.rows(keys[0]));
            } else {
                let cols: Vec<&[Cell]> = keys.iter().map(|r| io.col(*r)).collect();
                let n = cols[0].len();
                if let Err(e) = h.build(&cols, n) {
                    if !matches!(e, HashError::Full { .. }) {
                        return Err(e.into());
                    }
                    stats.hash_resizes += 1;
                    stats.fresh_allocations += u64::from(h.reserve(h.capacity().max(1) * 2));
                    h.build(&cols, n)?;
                }
            }
            Written::all(&[*dst], h.rows())
        }
        Instr::Count {
            dst,
            probe,
            index,
            build,
        } => {
            let (pk, n) = keys(io, p, probe);
            let (bk, _) = keys(io, p, build);
            let out = io.take_col(*dst);
            if out.len() < n {
                return Err(KernelError::Overflow {
                    op: "count",
                    rows: n,
                    capacity: out.len(),
                }
                .into());
            }
            kernels::count(io.hash(*index), &pk, n, &bk, out);
            Written::all(&[*dst], n)
        }
        Instr::Scan { dst, src } => {
            let s = io.col(*src);
            let out = io.take_col(*dst);
            if out.len() < s.len() {
                return Err(KernelError::Overflow {
                    op: "scan",
                    rows: s.len(),
                    capacity: out.len(),
                }
                .into());
            }
            let total = kernels::scan(s, out);
            Written {
                lens: vec![(*dst, s.len())],
                totals: vec![(*dst, total)],
            }
        }
        Instr::Join {
            dsts,
            probe,
            build,
            index,
            counts,
            offsets,
            ..
        } => {
            let (pk, n) = keys(io, p, probe);
            let (bk, _) = keys(io, p, build);
            let total = io.total(*offsets) as usize;
            let (c, o) = (io.col(*counts), io.col(*offsets));
            if c.len() != n || o.len() != n {
                return Err(internal("join counts do not match the probe side".into()));
            }
            let h = io.hash(*index);
            let a = io.take_col(dsts[0]);
            let b = io.take_col(dsts[1]);
            kernels::join(h, &pk, n, &bk, c, o, total, a, b)?;
            Written::all(dsts, total)
        }
        Instr::Sort { dsts, srcs } => {
            let cols = io.cols(srcs);
            let tags = io.tags(*srcs.last().unwrap());
            let n = tags.len();
            let before = scratch.capacity();
            kernels::sort_order(&cols, n, scratch);
            if scratch.capacity() != before {
                stats.fresh_allocations += 1;
            }
            let (tag, values) = dsts.split_last().unwrap();
            for (d, s) in values.iter().zip(&cols) {
                let out = io.take_col(*d);
                if out.len() < n {
                    return Err(KernelError::Overflow {
                        op: "sort",
                        rows: n,
                        capacity: out.len(),
                    }
                    .into());
                }
                kernels::gather("sort", scratch, s, out)?;
            }
            let out = io.take_tags(*tag);
            if out.capacity() < n {
                return Err(KernelError::Overflow {
                    op: "sort",
                    rows: n,
                    capacity: out.capacity(),
                }
                .into());
            }
            out.clear();
            out.resize(n, zero.clone());
            kernels::gather("sort", scratch, tags, out)?;
            Written::all(dsts, n)
        }
        Instr::Unique { dsts, srcs } => {
            let cols = io.cols(srcs);
            let tags = io.tags(*srcs.last().unwrap());
            debug_assert!(kernels::is_sorted(&cols, tags.len()), "unique of unsorted table");
            let n = kernels::unique(prov, Tab::new(&cols, tags), io.out(dsts))?;
            Written::all(dsts, n)
        }
        Instr::Merge { dsts, a, b } => {
            let (ac, bc) = (io.cols(a), io.cols(b));
            let (at_, bt) = (io.tags(*a.last().unwrap()), io.tags(*b.last().unwrap()));
            let n = kernels::merge(Tab::new(&ac, at_), Tab::new(&bc, bt), io.out(dsts), zero)?;
            Written::all(dsts, n)
        }
        Instr::Compact { dsts, mask, srcs } => {
            let m = io.col(*mask);
            let has_tag = p.kind(*srcs.last().unwrap()) == RegKind::Tag;
            let (cols, tags): (Vec<&[Cell]>, &[P::Tag]) = if has_tag {
                (io.cols(srcs), io.tags(*srcs.last().unwrap()))
            } else {
                (srcs.iter().map(|r| io.col(*r)).collect(), &[])
            };
            let tab = Tab {
                cols: &cols,
                tags,
                n: m.len(),
            };
            let out = if has_tag {
                io.out(dsts)
            } else {
                Out {
                    cols: dsts.iter().map(|r| io.take_col(*r)).collect(),
                    tags: None,
                }
            };
            let n = kernels::compact(m, tab, out, zero)?;
            Written::all(dsts, n)
        }
        Instr::Diff {
            kept,
            fresh,
            old,
            cand,
        } => {
            let (oc, cc) = (io.cols(old), io.cols(cand));
            let (ot, ct) = (io.tags(*old.last().unwrap()), io.tags(*cand.last().unwrap()));
            let ko = io.out(kept);
            let fo = io.out(fresh);
            let (nk, nf) = kernels::diff(prov, Tab::new(&oc, ot), Tab::new(&cc, ct), ko, fo)?;
            let mut w = Written::all(kept, nk);
            w.lens.extend(fresh.iter().map(|r| (*r, nf)));
            w
        }
        Instr::Prune { dsts, cand, against } => {
            let cc = io.cols(cand);
            let ct = io.tags(*cand.last().unwrap());
            let parts: Vec<Part<'_, P::Tag>> = against
                .iter()
                .map(|t| (io.cols(t), io.tags(*t.last().unwrap())))
                .collect();
            let tabs: Vec<Tab<'_, P::Tag>> = parts.iter().map(|(c, t)| Tab::new(c, t)).collect();
            let (n, dropped) = kernels::prune(prov, Tab::new(&cc, ct), &tabs, io.out(dsts))?;
            stats.pruned_rows += dropped;
            Written::all(dsts, n)
        }
    })
}

/// Key columns and probe row count; a lone tag register is a zero-width
/// key.
fn keys<'a, T>(io: &Io<'a, T>, p: &ApmProgram, regs: &[Reg]) -> (Vec<&'a [Cell]>, usize) {
    if regs.len() == 1 && p.kind(regs[0]) == RegKind::Tag {
        return (Vec::new(), io.rows(regs[0]));
    }
    let cols: Vec<&[Cell]> = regs.iter().map(|r| io.col(*r)).collect();
    let n = cols.first().map_or(0, |c| c.len());
    (cols, n)
}

fn any_recent<T: Clone>(db: &Database<T>, relations: &[String]) -> Result<bool, DbError> {
    for r in relations {
        if !db.relation(r)?.recent.is_empty() {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Evaluates every stratum to its fixpoint.
pub fn execute<P: Provenance>(
    prov: &P,
    strata: &[StratumCode],
    db: &mut Database<P::Tag>,
    cfg: &ExecConfig,
) -> Result<ExecStats, ExecError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.max(1))
        .build()
        .map_err(|e| ExecError::Threads(e.to_string()))?;
    pool.install(|| {
        let mut m = Machine::new(prov, cfg.clone());
        let all: Vec<String> = db.schemas().map(|s| s.name.clone()).collect();
        for (si, code) in strata.iter().enumerate() {
            for r in all.iter().filter(|r| !code.relations.contains(r)) {
                db.promote_partitions(prov, r)?;
            }
            for r in &code.relations {
                db.promote_partitions(prov, r)?;
                let store = db.relation_mut(r)?;
                std::mem::swap(&mut store.stable, &mut store.delta);
            }
            let mut iteration = 1;
            let mut init_state = ProgramState::new(&code.init);
            m.timed(si, iteration, |m| m.run(&code.init, &mut init_state, db))?;
            if let Some(step) = &code.step {
                let mut st = ProgramState::new(step);
                while any_recent(db, &code.relations)? {
                    iteration += 1;
                    m.timed(si, iteration, |m| m.run(step, &mut st, db))?;
                }
            }
            for r in &code.relations {
                db.promote_partitions(prov, r)?;
            }
            m.stats.iterations_per_stratum.push(iteration);
            m.stats.iterations += iteration;
        }
        for r in &all {
            db.promote_partitions(prov, r)?;
        }
        m.stats.provenance = prov.counters().snapshot();
        Ok(m.stats)
    })
}

impl<P: Provenance> Machine<'_, P> {
    fn timed(
        &mut self,
        stratum: usize,
        iteration: usize,
        f: impl FnOnce(&mut Self) -> Result<(), ExecError>,
    ) -> Result<(), ExecError> {
        let before = self.stats.fresh_allocations;
        let t0 = Instant::now();
        f(self)?;
        self.stats.per_iteration.push(IterationStats {
            stratum,
            iteration,
            fresh_allocations: self.stats.fresh_allocations - before,
            nanos: t0.elapsed().as_nanos() as u64,
        });
        Ok(())
    }
}
