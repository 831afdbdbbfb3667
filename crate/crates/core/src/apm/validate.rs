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


use std::collections::BTreeMap;

use thiserror::Error;

use super::{ApmProgram, Instr, Reg, RegKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SsaError {
    #[error("instruction {at}: register {reg} is written twice")]
    DoubleWrite { at: usize, reg: String },
    #[error("instruction {at}: register {reg} is read before it is written")]
    ReadBeforeWrite { at: usize, reg: String },
    #[error("instruction {at}: register {reg} is not allocated")]
    Unallocated { at: usize, reg: String },
    #[error("instruction {at}: register {reg} is allocated twice")]
    DoubleAlloc { at: usize, reg: String },
    #[error("instruction {at}: register {reg} should be a {expected} register")]
    KindMismatch { at: usize, reg: String, expected: &'static str },
    #[error("instruction {at}: {message}")]
    Shape { at: usize, message: String },
    #[error("instruction {at}: static register {reg} depends on non-static {input}")]
    NonStaticInput { at: usize, reg: String, input: String },
    #[error("register {0} does not exist")]
    UnknownRegister(u32),
    #[error("epilogue marker {0} is past the end of the program")]
    BadEpilogue(usize),
}

fn kind_name(k: RegKind) -> &'static str {
    match k {
        RegKind::Value => "value",
        RegKind::Tag => "tag",
        RegKind::Index => "index",
        RegKind::Hash => "hash",
    }
}

struct Checker<'a> {
    p: &'a ApmProgram,
    at: usize,
    errors: Vec<SsaError>,
}

impl Checker<'_> {
    fn kind(&mut self, r: Reg, k: RegKind) {
        if self.p.kind(r) != k {
            self.errors.push(SsaError::KindMismatch {
                at: self.at,
                reg: self.p.reg_name(r),
                expected: kind_name(k),
            });
        }
    }

    fn shape(&mut self, message: String) {
        self.errors.push(SsaError::Shape { at: self.at, message });
    }

    /// Value registers followed by one tag register.
    fn table(&mut self, regs: &[Reg]) {
        match regs.split_last() {
            None => self.shape("empty table".into()),
            Some((tag, values)) => {
                self.kind(*tag, RegKind::Tag);
                for &v in values {
                    self.kind(v, RegKind::Value);
                }
            }
        }
    }

    fn same_arity(&mut self, a: &[Reg], b: &[Reg]) {
        if a.len() != b.len() {
            self.shape(format!("table widths differ ({} vs {})", a.len(), b.len()));
        }
    }

    /// Join keys: `w` value registers, or a lone tag register when `w = 0`.
    fn keys(&mut self, keys: &[Reg]) -> usize {
        if keys.len() == 1 && self.p.kind(keys[0]) == RegKind::Tag {
            return 0;
        }
        if keys.is_empty() {
            self.shape("empty key list".into());
        }
        for &k in keys {
            self.kind(k, RegKind::Value);
        }
        keys.len()
    }

    fn instr(&mut self, i: &Instr) {
        match i {
            Instr::Alloc { dsts, .. } => {
                if dsts.is_empty() {
                    self.shape("empty allocation".into());
                }
            }
            Instr::Load { dsts, .. } => self.table(dsts),
            Instr::Store { srcs, .. } => self.table(srcs),
            Instr::Eval {
                dsts,
                mask,
                func,
                srcs,
            } => {
                for &r in dsts.iter().chain(srcs) {
                    self.kind(r, RegKind::Value);
                }
                if let Some(m) = mask {
                    self.kind(*m, RegKind::Index);
                }
                let (ins, outs) = match func {
                    super::EvalFn::Permute(perm) => {
                        (perm.iter().map(|c| c + 1).max().unwrap_or(0), perm.len())
                    }
                    super::EvalFn::Bytecode(b) => (b.inputs(), b.outputs()),
                };
                let extra = usize::from(mask.is_some() && outs == dsts.len() + 1);
                if ins > srcs.len() || outs != dsts.len() + extra {
                    self.shape(format!(
                        "function maps {ins} columns to {outs}, given {} and {}",
                        srcs.len(),
                        dsts.len()
                    ));
                }
            }
            Instr::Copy { dsts, srcs } => {
                self.table(dsts);
                for s in srcs {
                    self.table(s);
                    self.same_arity(dsts, s);
                }
            }
            Instr::Gather { dsts, index, srcs } => {
                self.kind(*index, RegKind::Index);
                self.same_arity(dsts, srcs);
                for (&d, &s) in dsts.iter().zip(srcs) {
                    let k = self.p.kind(s);
                    self.kind(d, k);
                }
            }
            Instr::GatherReduce { dst, indices, srcs } => {
                self.kind(*dst, RegKind::Tag);
                for &r in indices {
                    self.kind(r, RegKind::Index);
                }
                for &r in srcs {
                    self.kind(r, RegKind::Tag);
                }
            }
            Instr::Build { dst, keys } => {
                self.kind(*dst, RegKind::Hash);
                self.keys(keys);
            }
            Instr::Count {
                dst,
                probe,
                index,
                build,
            } => {
                self.kind(*dst, RegKind::Index);
                self.kind(*index, RegKind::Hash);
                let (a, b) = (self.keys(probe), self.keys(build));
                if a != b {
                    self.shape("probe and build keys differ in width".into());
                }
            }
            Instr::Scan { dst, src } => {
                self.kind(*dst, RegKind::Index);
                self.kind(*src, RegKind::Index);
            }
            Instr::Join {
                width,
                dsts,
                probe,
                build,
                index,
                counts,
                offsets,
            } => {
                for &r in dsts.iter().chain([counts, offsets]) {
                    self.kind(r, RegKind::Index);
                }
                self.kind(*index, RegKind::Hash);
                let (a, b) = (self.keys(probe), self.keys(build));
                if a != *width || b != *width {
                    self.shape(format!("join<{width}> given keys of width {a} and {b}"));
                }
            }
            Instr::Sort { dsts, srcs } | Instr::Unique { dsts, srcs } => {
                self.table(dsts);
                self.table(srcs);
                self.same_arity(dsts, srcs);
            }
            Instr::Merge { dsts, a, b } => {
                for t in [dsts, a, b] {
                    self.table(t);
                }
                self.same_arity(dsts, a);
                self.same_arity(dsts, b);
            }
            Instr::Compact { dsts, mask, srcs } => {
                self.kind(*mask, RegKind::Index);
                self.same_arity(dsts, srcs);
                for (&d, &s) in dsts.iter().zip(srcs) {
                    let k = self.p.kind(s);
                    self.kind(d, k);
                }
            }
            Instr::Diff {
                kept,
                fresh,
                old,
                cand,
            } => {
                for t in [kept, fresh, old, cand] {
                    self.table(t);
                    self.same_arity(kept, t);
                }
            }
            Instr::Prune { dsts, cand, against } => {
                self.table(dsts);
                self.table(cand);
                self.same_arity(dsts, cand);
                for t in against {
                    self.table(t);
                    self.same_arity(dsts, t);
                }
            }
        }
    }
}

/// Checks single assignment, allocation before write, write before read,
/// operand kinds, and that static registers only depend on static ones.
pub fn validate_ssa(p: &ApmProgram) -> Result<(), Vec<SsaError>> {
    let n = p.kinds.len();
    for i in &p.instrs {
        let regs = match i {
            Instr::Alloc { dsts, .. } => dsts.iter().chain(&i.uses()).copied().collect(),
            other => other.defs().into_iter().chain(other.uses()).collect::<Vec<_>>(),
        };
        if let Some(r) = regs.iter().find(|r| r.index() >= n) {
            return Err(vec![SsaError::UnknownRegister(r.0)]);
        }
    }
    if let Some(r) = p.statics.iter().find(|r| r.index() >= n) {
        return Err(vec![SsaError::UnknownRegister(r.0)]);
    }

    let mut c = Checker {
        p,
        at: 0,
        errors: Vec::new(),
    };
    if p.epilogue > p.instrs.len() {
        c.errors.push(SsaError::BadEpilogue(p.epilogue));
    }
    let mut allocated = vec![false; n];
    let mut written = vec![false; n];
    for (at, instr) in p.instrs.iter().enumerate() {
        c.at = at;
        c.instr(instr);
        let name = |r: Reg| p.reg_name(r);
        let uses = instr.uses();
        for &r in &uses {
            if !written[r.index()] {
                c.errors.push(if allocated[r.index()] {
                    SsaError::ReadBeforeWrite { at, reg: name(r) }
                } else {
                    SsaError::Unallocated { at, reg: name(r) }
                });
            }
        }
        let outs = match instr {
            Instr::Alloc { dsts, .. } => {
                for &r in dsts {
                    if std::mem::replace(&mut allocated[r.index()], true) {
                        c.errors.push(SsaError::DoubleAlloc { at, reg: name(r) });
                    }
                }
                dsts.clone()
            }
            other => {
                let defs = other.defs();
                for &r in &defs {
                    if !allocated[r.index()] {
                        c.errors.push(SsaError::Unallocated { at, reg: name(r) });
                    }
                    if std::mem::replace(&mut written[r.index()], true) {
                        c.errors.push(SsaError::DoubleWrite { at, reg: name(r) });
                    }
                }
                defs
            }
        };
        for &o in outs.iter().filter(|o| p.is_static(**o)) {
            if let Some(&u) = uses.iter().find(|u| !p.is_static(**u)) {
                c.errors.push(SsaError::NonStaticInput {
                    at,
                    reg: name(o),
                    input: name(u),
                });
            }
        }
    }
    if c.errors.is_empty() {
        Ok(())
    } else {
        Err(c.errors)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lifetime {
    pub first_write: usize,
    pub last_read: usize,
    /// Written but never read.
    pub dead: bool,
}

/// Live interval of every written register. Static registers live for the
/// whole program since later executions read them again.
pub fn register_lifetimes(p: &ApmProgram) -> Result<BTreeMap<Reg, Lifetime>, Vec<SsaError>> {
    validate_ssa(p)?;
    let mut out: BTreeMap<Reg, Lifetime> = BTreeMap::new();
    for (at, instr) in p.instrs.iter().enumerate() {
        for r in instr.uses() {
            if let Some(l) = out.get_mut(&r) {
                l.last_read = at;
                l.dead = false;
            }
        }
        if matches!(instr, Instr::Alloc { .. }) {
            continue;
        }
        for r in instr.defs() {
            out.insert(
                r,
                Lifetime {
                    first_write: at,
                    last_read: at,
                    dead: true,
                },
            );
        }
    }
    let end = p.instrs.len().saturating_sub(1);
    for (r, l) in out.iter_mut() {
        if p.is_static(*r) {
            *l = Lifetime {
                first_write: 0,
                last_read: end,
                dead: false,
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apm::{RelRef, SizeExpr};
    use crate::db::Partition;

    fn tiny() -> (ApmProgram, Reg, Reg, Reg) {
        let mut p = ApmProgram::new("t");
        let v = p.fresh(RegKind::Value);
        let t = p.fresh(RegKind::Tag);
        let v2 = p.fresh(RegKind::Value);
        p.push(Instr::Alloc {
            dsts: vec![v, t],
            size: SizeExpr::Rel(RelRef::new("e", Partition::Stable)),
        });
        p.push(Instr::Load {
            rel: RelRef::new("e", Partition::Stable),
            dsts: vec![v, t],
        });
        (p, v, t, v2)
    }

    #[test]
    fn double_write_is_reported() {
        let (mut p, v, t, _) = tiny();
        p.push(Instr::Load {
            rel: RelRef::new("e", Partition::Recent),
            dsts: vec![v, t],
        });
        let errs = validate_ssa(&p).unwrap_err();
        assert!(errs.contains(&SsaError::DoubleWrite { at: 2, reg: "v0".into() }));
    }

    #[test]
    fn unallocated_read_is_reported() {
        let (mut p, _, t, v2) = tiny();
        p.push(Instr::Store {
            rel: RelRef::new("f", Partition::Delta),
            srcs: vec![v2, t],
        });
        let errs = validate_ssa(&p).unwrap_err();
        assert_eq!(errs, vec![SsaError::Unallocated { at: 2, reg: "v2".into() }]);
    }

    #[test]
    fn read_before_write_is_reported() {
        let (mut p, _, t, v2) = tiny();
        p.push(Instr::Alloc {
            dsts: vec![v2],
            size: SizeExpr::Size(t),
        });
        p.push(Instr::Store {
            rel: RelRef::new("f", Partition::Delta),
            srcs: vec![v2, t],
        });
        let errs = validate_ssa(&p).unwrap_err();
        assert_eq!(errs, vec![SsaError::ReadBeforeWrite { at: 3, reg: "v2".into() }]);
    }

    #[test]
    fn lifetimes() {
        let (mut p, v, t, v2) = tiny();
        p.push(Instr::Alloc {
            dsts: vec![v2],
            size: SizeExpr::Size(t),
        });
        p.push(Instr::Eval {
            dsts: vec![v2],
            mask: None,
            func: crate::apm::EvalFn::Permute(vec![0]),
            srcs: vec![v],
        });
        p.push(Instr::Store {
            rel: RelRef::new("f", Partition::Delta),
            srcs: vec![v, t],
        });
        let l = register_lifetimes(&p).unwrap();
        assert_eq!(
            l[&v],
            Lifetime {
                first_write: 1,
                last_read: 4,
                dead: false
            }
        );
        assert_eq!(l[&t].last_read, 4);
        assert!(l[&v2].dead);
        assert_eq!((l[&v2].first_write, l[&v2].last_read), (3, 3));
    }

    #[test]
    fn static_register_spans_the_program() {
        let (mut p, v, t, _) = tiny();
        let h = p.fresh(RegKind::Hash);
        p.push(Instr::Alloc {
            dsts: vec![h],
            size: SizeExpr::Scaled(t, 2.0),
        });
        p.push(Instr::Build { dst: h, keys: vec![v] });
        p.statics.extend([v, t, h]);
        let l = register_lifetimes(&p).unwrap();
        assert_eq!(
            l[&h],
            Lifetime {
                first_write: 0,
                last_read: 3,
                dead: false
            }
        );
    }

    #[test]
    fn static_register_may_not_read_per_iteration_values() {
        let (mut p, v, t, _) = tiny();
        let h = p.fresh(RegKind::Hash);
        p.push(Instr::Alloc {
            dsts: vec![h],
            size: SizeExpr::Scaled(t, 2.0),
        });
        p.push(Instr::Build { dst: h, keys: vec![v] });
        p.statics.insert(h);
        let errs = validate_ssa(&p).unwrap_err();
        assert!(matches!(errs[0], SsaError::NonStaticInput { at: 2, .. }));
    }

    #[test]
    fn kinds_are_checked() {
        let (mut p, v, t, _) = tiny();
        let i = p.fresh(RegKind::Index);
        p.push(Instr::Alloc {
            dsts: vec![i],
            size: SizeExpr::Size(t),
        });
        p.push(Instr::Build { dst: i, keys: vec![v] });
        let errs = validate_ssa(&p).unwrap_err();
        assert!(matches!(errs[0], SsaError::KindMismatch { at: 3, expected: "hash", .. }));
    }
}
