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


//! Lowering of RAM strata to APM programs.
//!
//! Every stratum gets an `init` program for its first iteration and, when
//! recursive, a `step` program for the semi-naive iterations that follow.
//! Rule bodies write their results to the `delta` partition of the target;
//! the epilogue then folds `delta` into `stable` and `recent`.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::apm::{validate_ssa, ApmProgram, EvalFn, Instr, Reg, RegKind, RelRef, SizeExpr, SsaError};
use crate::db::{Partition, Schema};
use crate::ram::{RamExpr, RamProgram, RamRule, RamStratum, ScalarExpr};
use crate::runtime::bytecode::BytecodeProgram;
use crate::runtime::hash::DEFAULT_OCCUPANCY;
use crate::runtime::StratumCode;
use crate::value::ValueKind;

#[derive(Debug, Clone, PartialEq)]
pub struct CompileOptions {
    /// Hash index slots per key.
    pub occupancy: f64,
    pub static_regs: bool,
    /// Drop rule results that cannot change a known tuple before they
    /// reach `delta`.
    pub diff_delta: bool,
    pub batched: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            occupancy: DEFAULT_OCCUPANCY,
            static_regs: true,
            diff_delta: false,
            batched: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("rule for `{target}`: {message}")]
    Rule { target: String, message: String },
    #[error("{program}: {errors:?}")]
    Invalid { program: String, errors: Vec<SsaError> },
}

/// Registers of a table: value columns, then the tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRegs {
    pub values: Vec<Reg>,
    pub tag: Reg,
}

impl TableRegs {
    pub fn all(&self) -> Vec<Reg> {
        self.values.iter().copied().chain([self.tag]).collect()
    }

    /// Register whose length is the row count.
    fn len_reg(&self) -> Reg {
        self.values.first().copied().unwrap_or(self.tag)
    }

    fn size(&self) -> SizeExpr {
        SizeExpr::Size(self.len_reg())
    }
}

/// Where a relation leaf reads from in one semi-naive term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeafSource {
    Stable,
    Recent,
    /// The leaf contributes nothing.
    Empty,
}

pub struct CompileCtx<'a> {
    pub prog: ApmProgram,
    schemas: &'a HashMap<String, Schema>,
    opts: &'a CompileOptions,
    loads: HashMap<RelRef, TableRegs>,
}

impl<'a> CompileCtx<'a> {
    pub fn new(name: &str, schemas: &'a HashMap<String, Schema>, opts: &'a CompileOptions) -> Self {
        Self {
            prog: ApmProgram::new(name),
            schemas,
            opts,
            loads: HashMap::new(),
        }
    }

    fn kinds(&self, relation: &str) -> Result<Vec<ValueKind>, CompileError> {
        let s = self
            .schemas
            .get(relation)
            .ok_or_else(|| CompileError::UnknownRelation(relation.to_string()))?;
        let mut kinds = Vec::with_capacity(s.arity() + 1);
        if self.opts.batched {
            kinds.push(ValueKind::Symbol);
        }
        kinds.extend(&s.kinds);
        Ok(kinds)
    }

    fn fresh_table(&mut self, arity: usize) -> TableRegs {
        TableRegs {
            values: (0..arity).map(|_| self.prog.fresh(RegKind::Value)).collect(),
            tag: self.prog.fresh(RegKind::Tag),
        }
    }

    fn alloc(&mut self, dsts: Vec<Reg>, size: SizeExpr) {
        self.prog.push(Instr::Alloc { dsts, size });
    }

    /// Loads a partition, reusing an earlier load of it.
    pub fn load(&mut self, rel: RelRef) -> Result<TableRegs, CompileError> {
        if let Some(t) = self.loads.get(&rel) {
            return Ok(t.clone());
        }
        let arity = self.kinds(&rel.relation)?.len();
        let t = self.fresh_table(arity);
        self.alloc(t.all(), SizeExpr::Rel(rel.clone()));
        self.prog.push(Instr::Load {
            rel: rel.clone(),
            dsts: t.all(),
        });
        self.loads.insert(rel, t.clone());
        Ok(t)
    }

    pub fn store(&mut self, rel: RelRef, t: &TableRegs) {
        self.loads.remove(&rel);
        self.prog.push(Instr::Store { rel, srcs: t.all() });
    }

    fn empty_table(&mut self, arity: usize) -> TableRegs {
        let t = self.fresh_table(arity);
        self.alloc(t.all(), SizeExpr::Const(0));
        self.prog.push(Instr::Copy {
            dsts: t.all(),
            srcs: Vec::new(),
        });
        t
    }

    /// Output kinds of `e`.
    fn expr_kinds(&self, e: &RamExpr) -> Result<Vec<ValueKind>, CompileError> {
        Ok(match e {
            RamExpr::Relation(r) => self.kinds(r)?,
            RamExpr::Project(cols, c) => {
                let input = self.expr_kinds(c)?;
                cols.iter()
                    .map(|x| x.kind(&input))
                    .collect::<Result<_, _>>()
                    .map_err(|message| CompileError::Rule {
                        target: String::new(),
                        message,
                    })?
            }
            RamExpr::Select(_, c) => self.expr_kinds(c)?,
            RamExpr::Join(w, l, r) => {
                let mut k = self.expr_kinds(l)?;
                k.extend(self.expr_kinds(r)?.into_iter().skip(*w));
                k
            }
            RamExpr::Product(l, r) => {
                let mut k = self.expr_kinds(l)?;
                k.extend(self.expr_kinds(r)?);
                k
            }
            RamExpr::Union(l, _) | RamExpr::Intersect(l, _) => self.expr_kinds(l)?,
        })
    }

    /// Compiles `e` with relation leaves read per `leaves` (left to right).
    /// Returns `None` when the result is known to be empty.
    pub fn compile_expr(
        &mut self,
        e: &RamExpr,
        leaves: &mut std::slice::Iter<'_, LeafSource>,
    ) -> Result<Option<TableRegs>, CompileError> {
        match e {
            RamExpr::Relation(r) => {
                let part = match leaves.next().copied().unwrap_or(LeafSource::Stable) {
                    LeafSource::Empty => return Ok(None),
                    LeafSource::Stable => Partition::Stable,
                    LeafSource::Recent => Partition::Recent,
                };
                self.load(RelRef::new(r, part)).map(Some)
            }
            RamExpr::Project(cols, c) => {
                let kinds = self.expr_kinds(c)?;
                let Some(t) = self.compile_expr(c, leaves)? else {
                    return Ok(None);
                };
                self.compile_project(cols, &kinds, t).map(Some)
            }
            RamExpr::Select(pred, c) => {
                let kinds = self.expr_kinds(c)?;
                let Some(t) = self.compile_expr(c, leaves)? else {
                    return Ok(None);
                };
                self.compile_select(pred, &kinds, t).map(Some)
            }
            RamExpr::Join(w, l, r) => {
                let (a, b) = (self.compile_expr(l, leaves)?, self.compile_expr(r, leaves)?);
                Ok(match (a, b) {
                    (Some(a), Some(b)) => Some(self.compile_join(*w, &a, &b)),
                    _ => None,
                })
            }
            RamExpr::Product(l, r) => {
                let (a, b) = (self.compile_expr(l, leaves)?, self.compile_expr(r, leaves)?);
                Ok(match (a, b) {
                    (Some(a), Some(b)) => Some(self.compile_join(0, &a, &b)),
                    _ => None,
                })
            }
            RamExpr::Intersect(l, r) => {
                let (a, b) = (self.compile_expr(l, leaves)?, self.compile_expr(r, leaves)?);
                Ok(match (a, b) {
                    (Some(a), Some(b)) => {
                        let w = a.values.len();
                        Some(self.compile_join(w, &a, &b))
                    }
                    _ => None,
                })
            }
            RamExpr::Union(l, r) => {
                let (a, b) = (self.compile_expr(l, leaves)?, self.compile_expr(r, leaves)?);
                Ok(match (a, b) {
                    (Some(a), Some(b)) => Some(self.compile_union(&a, &b)),
                    (a, b) => a.or(b),
                })
            }
        }
    }

    pub fn compile_project(
        &mut self,
        cols: &[ScalarExpr],
        kinds: &[ValueKind],
        t: TableRegs,
    ) -> Result<TableRegs, CompileError> {
        let out = self.fresh_table(cols.len());
        let perm: Option<Vec<usize>> = cols
            .iter()
            .map(|c| match c {
                ScalarExpr::Col(k) => Some(*k),
                _ => None,
            })
            .collect();
        let func = match perm {
            Some(p) => EvalFn::Permute(p),
            None => EvalFn::Bytecode(BytecodeProgram::compile(cols, kinds).map_err(|e| CompileError::Rule {
                target: String::new(),
                message: e.to_string(),
            })?),
        };
        let partial = matches!(&func, EvalFn::Bytecode(b) if b.can_fail());
        if partial {
            let mask = self.prog.fresh(RegKind::Index);
            let tmp = self.fresh_table(cols.len());
            let mut regs = tmp.all();
            regs.push(mask);
            self.alloc(regs, t.size());
            self.prog.push(Instr::Eval {
                dsts: tmp.values.clone(),
                mask: Some(mask),
                func,
                srcs: t.values.clone(),
            });
            self.prog.push(Instr::Copy {
                dsts: vec![tmp.tag],
                srcs: vec![vec![t.tag]],
            });
            self.compact(mask, &tmp, out)
        } else {
            self.alloc(out.all(), t.size());
            if !cols.is_empty() {
                self.prog.push(Instr::Eval {
                    dsts: out.values.clone(),
                    mask: None,
                    func,
                    srcs: t.values.clone(),
                });
            }
            self.prog.push(Instr::Copy {
                dsts: vec![out.tag],
                srcs: vec![vec![t.tag]],
            });
            Ok(out)
        }
    }

    /// Keeps the rows of `t` whose `mask` is set.
    fn compact(&mut self, mask: Reg, t: &TableRegs, out: TableRegs) -> Result<TableRegs, CompileError> {
        let offs = self.prog.fresh(RegKind::Index);
        self.alloc(vec![offs], SizeExpr::Size(mask));
        self.prog.push(Instr::Scan { dst: offs, src: mask });
        self.alloc(out.all(), SizeExpr::Last(offs));
        self.prog.push(Instr::Compact {
            dsts: out.all(),
            mask,
            srcs: t.all(),
        });
        Ok(out)
    }

    pub fn compile_select(
        &mut self,
        pred: &ScalarExpr,
        kinds: &[ValueKind],
        t: TableRegs,
    ) -> Result<TableRegs, CompileError> {
        let bc = BytecodeProgram::compile(std::slice::from_ref(pred), kinds).map_err(|e| CompileError::Rule {
            target: String::new(),
            message: e.to_string(),
        })?;
        let mask = self.prog.fresh(RegKind::Index);
        self.alloc(vec![mask], t.size());
        self.prog.push(Instr::Eval {
            dsts: Vec::new(),
            mask: Some(mask),
            func: EvalFn::Bytecode(bc),
            srcs: t.values.clone(),
        });
        let out = self.fresh_table(t.values.len());
        self.compact(mask, &t, out)
    }

    /// Hash join on the first `w` columns; `l` is indexed and `r` probes.
    /// The result has the columns of `l` followed by the non-key columns of
    /// `r`.
    pub fn compile_join(&mut self, w: usize, l: &TableRegs, r: &TableRegs) -> TableRegs {
        let (lk, rk) = if w == 0 {
            (vec![l.tag], vec![r.tag])
        } else {
            (l.values[..w].to_vec(), r.values[..w].to_vec())
        };
        let h = self.prog.fresh(RegKind::Hash);
        self.alloc(vec![h], SizeExpr::Scaled(l.len_reg(), self.opts.occupancy));
        self.prog.push(Instr::Build {
            dst: h,
            keys: lk.clone(),
        });
        let c = self.prog.fresh(RegKind::Index);
        let o = self.prog.fresh(RegKind::Index);
        self.alloc(vec![c, o], r.size());
        self.prog.push(Instr::Count {
            dst: c,
            probe: rk.clone(),
            index: h,
            build: lk.clone(),
        });
        self.prog.push(Instr::Scan { dst: o, src: c });
        let il = self.prog.fresh(RegKind::Index);
        let ir = self.prog.fresh(RegKind::Index);
        let out = self.fresh_table(l.values.len() + r.values.len() - w);
        let mut regs = vec![il, ir];
        regs.extend(out.all());
        self.alloc(regs, SizeExpr::Last(o));
        self.prog.push(Instr::Join {
            width: w,
            dsts: [il, ir],
            probe: rk,
            build: lk,
            index: h,
            counts: c,
            offsets: o,
        });
        let nl = l.values.len();
        if nl > 0 {
            self.prog.push(Instr::Gather {
                dsts: out.values[..nl].to_vec(),
                index: il,
                srcs: l.values.clone(),
            });
        }
        if r.values.len() > w {
            self.prog.push(Instr::Gather {
                dsts: out.values[nl..].to_vec(),
                index: ir,
                srcs: r.values[w..].to_vec(),
            });
        }
        self.prog.push(Instr::GatherReduce {
            dst: out.tag,
            indices: [il, ir],
            srcs: [l.tag, r.tag],
        });
        out
    }

    fn sort(&mut self, t: &TableRegs) -> TableRegs {
        let out = self.fresh_table(t.values.len());
        self.alloc(out.all(), SizeExpr::Size(t.tag));
        self.prog.push(Instr::Sort {
            dsts: out.all(),
            srcs: t.all(),
        });
        out
    }

    fn unique(&mut self, t: &TableRegs) -> TableRegs {
        let out = self.fresh_table(t.values.len());
        self.alloc(out.all(), SizeExpr::Size(t.tag));
        self.prog.push(Instr::Unique {
            dsts: out.all(),
            srcs: t.all(),
        });
        out
    }

    fn merge(&mut self, a: &TableRegs, b: &TableRegs) -> TableRegs {
        let out = self.fresh_table(a.values.len());
        self.alloc(out.all(), SizeExpr::Sum(vec![SizeExpr::Size(a.tag), SizeExpr::Size(b.tag)]));
        self.prog.push(Instr::Merge {
            dsts: out.all(),
            a: a.all(),
            b: b.all(),
        });
        out
    }

    pub fn compile_union(&mut self, a: &TableRegs, b: &TableRegs) -> TableRegs {
        let sa = self.sort(a);
        let sb = self.sort(b);
        let m = self.merge(&sa, &sb);
        self.unique(&m)
    }

    /// Concatenates tables of equal width.
    fn append(&mut self, parts: &[TableRegs]) -> TableRegs {
        if parts.len() == 1 {
            return parts[0].clone();
        }
        let out = self.fresh_table(parts[0].values.len());
        self.alloc(out.all(), SizeExpr::Sum(parts.iter().map(|p| SizeExpr::Size(p.tag)).collect()));
        self.prog.push(Instr::Copy {
            dsts: out.all(),
            srcs: parts.iter().map(|p| p.all()).collect(),
        });
        out
    }

    fn prune(&mut self, relation: &str, cand: &TableRegs) -> Result<TableRegs, CompileError> {
        let s = self.load(RelRef::new(relation, Partition::Stable))?;
        let r = self.load(RelRef::new(relation, Partition::Recent))?;
        let out = self.fresh_table(cand.values.len());
        self.alloc(out.all(), SizeExpr::Size(cand.tag));
        self.prog.push(Instr::Prune {
            dsts: out.all(),
            cand: cand.all(),
            against: vec![s.all(), r.all()],
        });
        Ok(out)
    }

    /// Folds `delta` of `relation` into `stable` and `recent`.
    fn epilogue(&mut self, relation: &str) -> Result<(), CompileError> {
        let rel = |p| RelRef::new(relation, p);
        let s = self.load(rel(Partition::Stable))?;
        let r = self.load(rel(Partition::Recent))?;
        let d = self.load(rel(Partition::Delta))?;
        let m = self.merge(&s, &r);
        let ds = self.sort(&d);
        let du = self.unique(&ds);
        let kept = self.fresh_table(m.values.len());
        let fresh = self.fresh_table(m.values.len());
        self.alloc(kept.all(), SizeExpr::Size(m.tag));
        self.alloc(fresh.all(), SizeExpr::Size(du.tag));
        self.prog.push(Instr::Diff {
            kept: kept.all(),
            fresh: fresh.all(),
            old: m.all(),
            cand: du.all(),
        });
        self.store(rel(Partition::Stable), &kept);
        self.store(rel(Partition::Recent), &fresh);
        let empty = self.empty_table(m.values.len());
        self.store(rel(Partition::Delta), &empty);
        Ok(())
    }
}

fn leaf_count(e: &RamExpr) -> usize {
    e.relations().len()
}

/// Leaf assignments of the semi-naive expansion of `e`: every term where
/// at least one local leaf reads `recent`. Non-local leaves only read
/// `stable`.
pub fn delta_terms(e: &RamExpr, local: &HashSet<&str>) -> Vec<Vec<LeafSource>> {
    fn old(e: &RamExpr) -> Vec<LeafSource> {
        vec![LeafSource::Stable; leaf_count(e)]
    }
    fn empty(e: &RamExpr) -> Vec<LeafSource> {
        vec![LeafSource::Empty; leaf_count(e)]
    }
    fn cat(a: &[LeafSource], b: &[LeafSource]) -> Vec<LeafSource> {
        a.iter().chain(b).copied().collect()
    }
    match e {
        RamExpr::Relation(r) => {
            if local.contains(r.as_str()) {
                vec![vec![LeafSource::Recent]]
            } else {
                Vec::new()
            }
        }
        RamExpr::Project(_, c) | RamExpr::Select(_, c) => delta_terms(c, local),
        RamExpr::Join(_, l, r) | RamExpr::Product(l, r) | RamExpr::Intersect(l, r) => {
            let (dl, dr) = (delta_terms(l, local), delta_terms(r, local));
            let mut out = Vec::new();
            for b in &dr {
                out.push(cat(&old(l), b));
            }
            for a in &dl {
                out.push(cat(a, &old(r)));
            }
            for a in &dl {
                for b in &dr {
                    out.push(cat(a, b));
                }
            }
            out
        }
        RamExpr::Union(l, r) => {
            let mut out: Vec<Vec<LeafSource>> =
                delta_terms(l, local).iter().map(|a| cat(a, &empty(r))).collect();
            out.extend(delta_terms(r, local).iter().map(|b| cat(&empty(l), b)));
            out
        }
    }
}

/// Adds a leading sample-id column to every table of a rule.
pub fn batch_expr(e: &RamExpr) -> RamExpr {
    let shift = |c: usize| c + 1;
    match e {
        RamExpr::Relation(r) => RamExpr::Relation(r.clone()),
        RamExpr::Project(cols, c) => RamExpr::project(
            std::iter::once(ScalarExpr::Col(0))
                .chain(cols.iter().map(|x| x.map_cols(&shift)))
                .collect(),
            batch_expr(c),
        ),
        RamExpr::Select(p, c) => RamExpr::select(p.map_cols(&shift), batch_expr(c)),
        RamExpr::Join(w, l, r) => RamExpr::join(w + 1, batch_expr(l), batch_expr(r)),
        RamExpr::Product(l, r) => RamExpr::join(1, batch_expr(l), batch_expr(r)),
        RamExpr::Union(l, r) => RamExpr::union(batch_expr(l), batch_expr(r)),
        RamExpr::Intersect(l, r) => RamExpr::intersect(batch_expr(l), batch_expr(r)),
    }
}

pub fn apply_batching(p: &RamProgram) -> RamProgram {
    RamProgram {
        strata: p
            .strata
            .iter()
            .map(|s| RamStratum {
                relations: s.relations.clone(),
                rules: s
                    .rules
                    .iter()
                    .map(|r| RamRule::new(r.target.clone(), batch_expr(&r.expr)))
                    .collect(),
                recursive: s.recursive,
            })
            .collect(),
    }
}

/// Compiles the rules of one program section. `terms` gives the leaf
/// assignments to emit for each rule.
fn compile_section(
    ctx: &mut CompileCtx<'_>,
    stratum: &RamStratum,
    terms: impl Fn(&RamRule) -> Vec<Vec<LeafSource>>,
    seeds: bool,
) -> Result<(), CompileError> {
    let mut results: Vec<(String, TableRegs)> = Vec::new();
    for rule in &stratum.rules {
        for leaves in terms(rule) {
            let t = ctx
                .compile_expr(&rule.expr, &mut leaves.iter())
                .map_err(|e| match e {
                    CompileError::Rule { message, .. } => CompileError::Rule {
                        target: rule.target.clone(),
                        message,
                    },
                    other => other,
                })?;
            if let Some(t) = t {
                results.push((rule.target.clone(), t));
            }
        }
    }
    for rel in &stratum.relations {
        let mut parts: Vec<TableRegs> = results
            .iter()
            .filter(|(r, _)| r == rel)
            .map(|(_, t)| t.clone())
            .collect();
        if parts.is_empty() {
            continue;
        }
        if seeds {
            parts.insert(0, ctx.load(RelRef::new(rel, Partition::Delta))?);
        }
        let mut t = ctx.append(&parts);
        if ctx.opts.diff_delta {
            t = ctx.prune(rel, &t)?;
        }
        ctx.store(RelRef::new(rel, Partition::Delta), &t);
    }
    ctx.prog.epilogue = ctx.prog.instrs.len();
    for rel in &stratum.relations {
        ctx.epilogue(rel)?;
    }
    Ok(())
}

/// Registers whose value is the same on every run of a step program:
/// loads of relations outside the stratum and pure functions of those.
pub fn mark_static_registers(p: &mut ApmProgram, local: &HashSet<&str>) {
    let constant = |rel: &RelRef| !local.contains(rel.relation.as_str());
    let mut statics: BTreeSet<Reg> = BTreeSet::new();
    for i in &p.instrs {
        match i {
            Instr::Load { rel, dsts } if constant(rel) => statics.extend(dsts),
            Instr::Alloc { .. } | Instr::Load { .. } | Instr::Store { .. } => {}
            other => statics.extend(other.defs()),
        }
    }
    loop {
        let before = statics.len();
        for i in &p.instrs {
            match i {
                Instr::Alloc { dsts, size } => {
                    let ok = size.regs().iter().all(|r| statics.contains(r))
                        && size.relations().iter().all(|r| constant(r))
                        && dsts.iter().all(|d| statics.contains(d));
                    if !ok {
                        for d in dsts {
                            statics.remove(d);
                        }
                    }
                }
                Instr::Load { .. } | Instr::Store { .. } => {}
                other => {
                    if !other.uses().iter().all(|u| statics.contains(u)) {
                        for d in other.defs() {
                            statics.remove(&d);
                        }
                    }
                }
            }
        }
        if statics.len() == before {
            break;
        }
    }
    p.statics = statics;
}

/// Compiles every stratum. Batched programs must already be rewritten by
/// [`apply_batching`].
pub fn compile_program(
    ram: &RamProgram,
    schemas: &[Schema],
    opts: &CompileOptions,
) -> Result<Vec<StratumCode>, CompileError> {
    let map: HashMap<String, Schema> = schemas.iter().map(|s| (s.name.clone(), s.clone())).collect();
    let mut out = Vec::with_capacity(ram.strata.len());
    for (i, stratum) in ram.strata.iter().enumerate() {
        let local: HashSet<&str> = stratum.relations.iter().map(String::as_str).collect();
        // Nothing of the stratum is known before the first iteration, so
        // local leaves are empty there.
        let first = |r: &RamRule| {
            let leaves = r
                .expr
                .relations()
                .iter()
                .map(|x| if local.contains(x) { LeafSource::Empty } else { LeafSource::Stable })
                .collect();
            vec![leaves]
        };

        let mut init = CompileCtx::new(&format!("s{i}.init"), &map, opts);
        compile_section(&mut init, stratum, first, true)?;
        check(&init.prog)?;

        let step = if stratum.recursive {
            let mut ctx = CompileCtx::new(&format!("s{i}.step"), &map, opts);
            compile_section(&mut ctx, stratum, |r| delta_terms(&r.expr, &local), false)?;
            if opts.static_regs {
                mark_static_registers(&mut ctx.prog, &local);
            }
            check(&ctx.prog)?;
            Some(ctx.prog)
        } else {
            None
        };
        out.push(StratumCode {
            relations: stratum.relations.clone(),
            init: init.prog,
            step,
        });
    }
    Ok(out)
}

fn check(p: &ApmProgram) -> Result<(), CompileError> {
    validate_ssa(p).map_err(|errors| CompileError::Invalid {
        program: p.name.clone(),
        errors,
    })
}

/// All programs in execution order.
pub fn listing(code: &[StratumCode]) -> Vec<&ApmProgram> {
    code.iter()
        .flat_map(|c| std::iter::once(&c.init).chain(c.step.as_ref()))
        .collect()
}
