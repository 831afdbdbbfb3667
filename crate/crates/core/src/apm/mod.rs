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


//! The APM instruction language.
//!
//! A program is a straight-line list of instructions over registers.
//! Every register holds one column (a value, tag or index column) or a hash
//! index, is written once, and is sized by an explicit `alloc` before its
//! writer runs. Tables are passed around as register lists with the tag
//! register last.

mod text;
mod validate;

use std::collections::BTreeSet;
use std::fmt;

pub use text::{parse_listing, parse_program, ParseError};
pub use validate::{register_lifetimes, validate_ssa, Lifetime, SsaError};

use crate::db::Partition;
use crate::runtime::bytecode::BytecodeProgram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(pub u32);

impl Reg {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegKind {
    Value,
    Tag,
    /// Row indices, counts and masks.
    Index,
    Hash,
}

impl RegKind {
    pub fn prefix(self) -> char {
        match self {
            RegKind::Value => 'v',
            RegKind::Tag => 't',
            RegKind::Index => 'i',
            RegKind::Hash => 'h',
        }
    }

    pub fn from_prefix(c: char) -> Option<RegKind> {
        Some(match c {
            'v' => RegKind::Value,
            't' => RegKind::Tag,
            'i' => RegKind::Index,
            'h' => RegKind::Hash,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RelRef {
    pub relation: String,
    pub partition: Partition,
}

impl RelRef {
    pub fn new(relation: impl Into<String>, partition: Partition) -> Self {
        Self {
            relation: relation.into(),
            partition,
        }
    }
}

impl fmt::Display for RelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.relation, self.partition)
    }
}

/// Row count of an allocation, known before the instructions that fill it
/// run.
#[derive(Debug, Clone, PartialEq)]
pub enum SizeExpr {
    /// Length of a defined register.
    Size(Reg),
    /// Current size of a stored partition.
    Rel(RelRef),
    Sum(Vec<SizeExpr>),
    /// Hash index capacity: `size(r) * O`.
    Scaled(Reg, f64),
    /// Total produced by a `scan`.
    Last(Reg),
    Const(usize),
}

impl SizeExpr {
    pub fn regs(&self) -> Vec<Reg> {
        let mut out = Vec::new();
        self.collect_regs(&mut out);
        out
    }

    fn collect_regs(&self, out: &mut Vec<Reg>) {
        match self {
            SizeExpr::Size(r) | SizeExpr::Scaled(r, _) | SizeExpr::Last(r) => out.push(*r),
            SizeExpr::Sum(parts) => parts.iter().for_each(|p| p.collect_regs(out)),
            SizeExpr::Rel(_) | SizeExpr::Const(_) => {}
        }
    }

    pub fn relations(&self) -> Vec<&RelRef> {
        match self {
            SizeExpr::Rel(r) => vec![r],
            SizeExpr::Sum(parts) => parts.iter().flat_map(|p| p.relations()).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalFn {
    /// Output column `k` is input column `perm[k]`.
    Permute(Vec<usize>),
    Bytecode(BytecodeProgram),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instr {
    Alloc {
        dsts: Vec<Reg>,
        size: SizeExpr,
    },
    Load {
        rel: RelRef,
        dsts: Vec<Reg>,
    },
    /// Replaces the partition with the table.
    Store {
        rel: RelRef,
        srcs: Vec<Reg>,
    },
    /// Applies `func` to each row of the value registers `srcs`. With a
    /// mask, a row whose function fails (division by zero) gets mask 0; if
    /// `func` has one output more than `dsts`, that output's truth value
    /// also goes into the mask.
    Eval {
        dsts: Vec<Reg>,
        mask: Option<Reg>,
        func: EvalFn,
        srcs: Vec<Reg>,
    },
    /// Concatenates same-shaped tables.
    Copy {
        dsts: Vec<Reg>,
        srcs: Vec<Vec<Reg>>,
    },
    Gather {
        dsts: Vec<Reg>,
        index: Reg,
        srcs: Vec<Reg>,
    },
    /// `dst[k] = srcs[0][indices[0][k]] ⊗ srcs[1][indices[1][k]]`.
    GatherReduce {
        dst: Reg,
        indices: [Reg; 2],
        srcs: [Reg; 2],
    },
    /// Hash index over key registers. A single tag register as key stands
    /// for a zero-width key: the index only records the row count.
    Build {
        dst: Reg,
        keys: Vec<Reg>,
    },
    Count {
        dst: Reg,
        probe: Vec<Reg>,
        index: Reg,
        build: Vec<Reg>,
    },
    /// Exclusive prefix sum; the total is available as `last(dst)`.
    Scan {
        dst: Reg,
        src: Reg,
    },
    /// Emits (probe row, build row) pairs as `[i_l, i_r]` with `i_l` indexing
    /// the build side.
    Join {
        width: usize,
        dsts: [Reg; 2],
        probe: Vec<Reg>,
        build: Vec<Reg>,
        index: Reg,
        counts: Reg,
        offsets: Reg,
    },
    Sort {
        dsts: Vec<Reg>,
        srcs: Vec<Reg>,
    },
    /// Collapses equal adjacent tuples of a sorted table, combining tags
    /// with ⊕.
    Unique {
        dsts: Vec<Reg>,
        srcs: Vec<Reg>,
    },
    /// Merges two sorted tables, keeping duplicates (rows of `a` first).
    Merge {
        dsts: Vec<Reg>,
        a: Vec<Reg>,
        b: Vec<Reg>,
    },
    /// Keeps rows whose mask is nonzero, in order.
    Compact {
        dsts: Vec<Reg>,
        mask: Reg,
        srcs: Vec<Reg>,
    },
    /// Folds sorted unique candidates into a sorted unique table `old`.
    /// Candidates that are new, or whose tag update is not saturated, go to
    /// `fresh`; every other tuple of `old` goes to `kept`. Updated tuples
    /// carry `old ⊕ new`.
    Diff {
        kept: Vec<Reg>,
        fresh: Vec<Reg>,
        old: Vec<Reg>,
        cand: Vec<Reg>,
    },
    /// Drops candidate rows that change nothing in any of the sorted
    /// tables `against`.
    Prune {
        dsts: Vec<Reg>,
        cand: Vec<Reg>,
        against: Vec<Vec<Reg>>,
    },
}

impl Instr {
    pub fn name(&self) -> &'static str {
        match self {
            Instr::Alloc { .. } => "alloc",
            Instr::Load { .. } => "load",
            Instr::Store { .. } => "store",
            Instr::Eval { .. } => "eval",
            Instr::Copy { .. } => "copy",
            Instr::Gather { .. } => "gather",
            Instr::GatherReduce { .. } => "gather_reduce",
            Instr::Build { .. } => "build",
            Instr::Count { .. } => "count",
            Instr::Scan { .. } => "scan",
            Instr::Join { .. } => "join",
            Instr::Sort { .. } => "sort",
            Instr::Unique { .. } => "unique",
            Instr::Merge { .. } => "merge",
            Instr::Compact { .. } => "compact",
            Instr::Diff { .. } => "diff",
            Instr::Prune { .. } => "prune",
        }
    }

    /// Registers written.
    pub fn defs(&self) -> Vec<Reg> {
        match self {
            Instr::Alloc { .. } | Instr::Store { .. } => Vec::new(),
            Instr::Load { dsts, .. }
            | Instr::Copy { dsts, .. }
            | Instr::Gather { dsts, .. }
            | Instr::Sort { dsts, .. }
            | Instr::Unique { dsts, .. }
            | Instr::Merge { dsts, .. }
            | Instr::Compact { dsts, .. }
            | Instr::Prune { dsts, .. } => dsts.clone(),
            Instr::Eval { dsts, mask, .. } => dsts.iter().chain(mask).copied().collect(),
            Instr::GatherReduce { dst, .. }
            | Instr::Build { dst, .. }
            | Instr::Count { dst, .. }
            | Instr::Scan { dst, .. } => vec![*dst],
            Instr::Join { dsts, .. } => dsts.to_vec(),
            Instr::Diff { kept, fresh, .. } => kept.iter().chain(fresh).copied().collect(),
        }
    }

    /// Registers read, including those named by an allocation size.
    pub fn uses(&self) -> Vec<Reg> {
        match self {
            Instr::Alloc { size, .. } => size.regs(),
            Instr::Load { .. } => Vec::new(),
            Instr::Store { srcs, .. }
            | Instr::Eval { srcs, .. }
            | Instr::Sort { srcs, .. }
            | Instr::Unique { srcs, .. } => srcs.clone(),
            Instr::Copy { srcs, .. } => srcs.concat(),
            Instr::Gather { index, srcs, .. } => std::iter::once(*index).chain(srcs.iter().copied()).collect(),
            Instr::GatherReduce { indices, srcs, .. } => indices.iter().chain(srcs).copied().collect(),
            Instr::Build { keys, .. } => keys.clone(),
            Instr::Count {
                probe, index, build, ..
            } => probe.iter().chain([index]).chain(build).copied().collect(),
            Instr::Scan { src, .. } => vec![*src],
            Instr::Join {
                probe,
                build,
                index,
                counts,
                offsets,
                ..
            } => probe
                .iter()
                .chain(build)
                .chain([index, counts, offsets])
                .copied()
                .collect(),
            Instr::Merge { a, b, .. } => a.iter().chain(b).copied().collect(),
            Instr::Compact { mask, srcs, .. } => std::iter::once(*mask).chain(srcs.iter().copied()).collect(),
            Instr::Diff { old, cand, .. } => old.iter().chain(cand).copied().collect(),
            Instr::Prune { cand, against, .. } => {
                cand.iter().chain(against.iter().flatten()).copied().collect()
            }
        }
    }

    /// Has no effect outside its destination registers.
    pub fn is_pure(&self) -> bool {
        !matches!(self, Instr::Store { .. } | Instr::Load { .. })
    }
}

/// One straight-line program. Instructions from `epilogue` on fold the
/// iteration's new facts into the relation partitions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApmProgram {
    pub name: String,
    pub instrs: Vec<Instr>,
    pub kinds: Vec<RegKind>,
    pub statics: BTreeSet<Reg>,
    pub epilogue: usize,
}

impl ApmProgram {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn fresh(&mut self, kind: RegKind) -> Reg {
        self.kinds.push(kind);
        Reg(self.kinds.len() as u32 - 1)
    }

    pub fn kind(&self, r: Reg) -> RegKind {
        self.kinds[r.index()]
    }

    pub fn push(&mut self, i: Instr) {
        self.instrs.push(i);
    }

    pub fn is_static(&self, r: Reg) -> bool {
        self.statics.contains(&r)
    }

    /// Instruction runs only on the first execution of the program: all of
    /// its outputs are static.
    pub fn is_static_instr(&self, i: &Instr) -> bool {
        let regs = match i {
            Instr::Alloc { dsts, .. } => dsts.clone(),
            other => other.defs(),
        };
        !regs.is_empty() && regs.iter().all(|r| self.is_static(*r))
    }

    pub fn reg_name(&self, r: Reg) -> String {
        format!("{}{}", self.kind(r).prefix(), r.0)
    }

    pub fn to_text(&self) -> String {
        text::print_program(self)
    }
}

impl fmt::Display for ApmProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub fn print_listing(programs: &[ApmProgram]) -> String {
    programs.iter().map(|p| p.to_text()).collect()
}
