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


//! Textual form of APM programs.
//!
//! ```text
//! program s0.step
//! static v0 t1 h2
//!   alloc([v0, t1], size(edge.stable))
//!   static [v0, t1] <- load<edge.stable>()
//!   [i4] <- count(v3; h2; v0)
//! epilogue
//!   store<path.recent>(v9, v10, t11)
//! end
//! ```
//!
//! The `static` header is authoritative; the per-instruction `static`
//! prefix is informational.

use std::collections::BTreeSet;
use std::fmt::Write;

use thiserror::Error;

use super::{ApmProgram, EvalFn, Instr, Reg, RegKind, RelRef, SizeExpr};
use crate::db::Partition;
use crate::runtime::bytecode::BytecodeProgram;
use crate::value::format_float;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn list(p: &ApmProgram, regs: &[Reg]) -> String {
    regs.iter().map(|r| p.reg_name(*r)).collect::<Vec<_>>().join(", ")
}

fn group(p: &ApmProgram, regs: &[Reg]) -> String {
    format!("[{}]", list(p, regs))
}

fn size_text(p: &ApmProgram, s: &SizeExpr) -> String {
    match s {
        SizeExpr::Size(r) => format!("size({})", p.reg_name(*r)),
        SizeExpr::Rel(r) => format!("size({r})"),
        SizeExpr::Scaled(r, o) => format!("size({})*{}", p.reg_name(*r), format_float(*o)),
        SizeExpr::Last(r) => format!("last({})", p.reg_name(*r)),
        SizeExpr::Const(n) => format!("const({n})"),
        SizeExpr::Sum(parts) => parts
            .iter()
            .map(|x| size_text(p, x))
            .collect::<Vec<_>>()
            .join(" + "),
    }
}

fn eval_param(f: &EvalFn) -> String {
    match f {
        EvalFn::Permute(perm) => format!(
            "perm({})",
            perm.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
        ),
        EvalFn::Bytecode(b) => format!("bc({})", b.to_text()),
    }
}

pub(super) fn instr_text(p: &ApmProgram, i: &Instr) -> String {
    let g = |r: &[Reg]| group(p, r);
    let l = |r: &[Reg]| list(p, r);
    let n = |r: &Reg| p.reg_name(*r);
    match i {
        Instr::Alloc { dsts, size } => format!("alloc({}, {})", g(dsts), size_text(p, size)),
        Instr::Load { rel, dsts } => format!("{} <- load<{rel}>()", g(dsts)),
        Instr::Store { rel, srcs } => format!("store<{rel}>({})", l(srcs)),
        Instr::Eval {
            dsts,
            mask,
            func,
            srcs,
        } => {
            let mask = mask.map(|m| format!(" [{}]", n(&m))).unwrap_or_default();
            format!("{}{mask} <- eval<{}>({})", g(dsts), eval_param(func), l(srcs))
        }
        Instr::Copy { dsts, srcs } => format!(
            "{} <- copy({})",
            g(dsts),
            srcs.iter().map(|s| g(s)).collect::<Vec<_>>().join(", ")
        ),
        Instr::Gather { dsts, index, srcs } => {
            format!("{} <- gather({}; {})", g(dsts), n(index), l(srcs))
        }
        Instr::GatherReduce { dst, indices, srcs } => format!(
            "[{}] <- gather<otimes>({}; {})",
            n(dst),
            l(indices),
            l(srcs)
        ),
        Instr::Build { dst, keys } => format!("[{}] <- build({})", n(dst), l(keys)),
        Instr::Count {
            dst,
            probe,
            index,
            build,
        } => format!("[{}] <- count({}; {}; {})", n(dst), l(probe), n(index), l(build)),
        Instr::Scan { dst, src } => format!("[{}] <- scan({})", n(dst), n(src)),
        Instr::Join {
            width,
            dsts,
            probe,
            build,
            index,
            counts,
            offsets,
        } => format!(
            "{} <- join<{width}>({}; {}; {}; {}; {})",
            g(dsts),
            l(probe),
            l(build),
            n(index),
            n(counts),
            n(offsets)
        ),
        Instr::Sort { dsts, srcs } => format!("{} <- sort({})", g(dsts), l(srcs)),
        Instr::Unique { dsts, srcs } => format!("{} <- unique<oplus>({})", g(dsts), l(srcs)),
        Instr::Merge { dsts, a, b } => format!("{} <- merge({}; {})", g(dsts), l(a), l(b)),
        Instr::Compact { dsts, mask, srcs } => {
            format!("{} <- compact({}; {})", g(dsts), n(mask), l(srcs))
        }
        Instr::Diff {
            kept,
            fresh,
            old,
            cand,
        } => format!(
            "{} {} <- diff<oplus>({}; {})",
            g(kept),
            g(fresh),
            l(old),
            l(cand)
        ),
        Instr::Prune { dsts, cand, against } => {
            let mut args = vec![l(cand)];
            args.extend(against.iter().map(|a| l(a)));
            format!("{} <- prune<oplus>({})", g(dsts), args.join("; "))
        }
    }
}

pub(super) fn print_program(p: &ApmProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "program {}", p.name);
    if !p.statics.is_empty() {
        let names: Vec<String> = p.statics.iter().map(|r| p.reg_name(*r)).collect();
        let _ = writeln!(out, "static {}", names.join(" "));
    }
    for (k, i) in p.instrs.iter().enumerate() {
        if k == p.epilogue {
            out.push_str("epilogue\n");
        }
        let prefix = if p.is_static_instr(i) { "static " } else { "" };
        let _ = writeln!(out, "  {prefix}{}", instr_text(p, i));
    }
    if p.epilogue >= p.instrs.len() {
        out.push_str("epilogue\n");
    }
    out.push_str("end\n");
    out
}

struct LineParser<'a> {
    line: usize,
    kinds: &'a mut Vec<Option<RegKind>>,
}

impl LineParser<'_> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            line: self.line,
            message: message.into(),
        })
    }

    fn reg(&mut self, s: &str) -> Result<Reg, ParseError> {
        let s = s.trim();
        let mut chars = s.chars();
        let kind = chars.next().and_then(RegKind::from_prefix);
        let id = chars.as_str().parse::<u32>().ok();
        let (Some(kind), Some(id)) = (kind, id) else {
            return self.err(format!("bad register `{s}`"));
        };
        let idx = id as usize;
        if self.kinds.len() <= idx {
            self.kinds.resize(idx + 1, None);
        }
        match self.kinds[idx] {
            Some(k) if k != kind => return self.err(format!("register {id} used with two kinds")),
            _ => self.kinds[idx] = Some(kind),
        }
        Ok(Reg(id))
    }

    fn regs(&mut self, s: &str) -> Result<Vec<Reg>, ParseError> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| self.reg(t))
            .collect()
    }

    fn one(&mut self, s: &str) -> Result<Reg, ParseError> {
        match self.regs(s)?.as_slice() {
            [r] => Ok(*r),
            _ => self.err(format!("expected one register in `{s}`")),
        }
    }

    fn two(&mut self, s: &str) -> Result<[Reg; 2], ParseError> {
        match self.regs(s)?.as_slice() {
            [a, b] => Ok([*a, *b]),
            _ => self.err(format!("expected two registers in `{s}`")),
        }
    }

    /// `[a, b] [c]` style register groups.
    fn groups(&mut self, s: &str) -> Result<Vec<Vec<Reg>>, ParseError> {
        let mut out = Vec::new();
        let mut rest = s.trim();
        while !rest.is_empty() {
            let Some(body) = rest.strip_prefix('[') else {
                return self.err(format!("expected `[` in `{s}`"));
            };
            let Some(end) = body.find(']') else {
                return self.err("unclosed `[`");
            };
            out.push(self.regs(&body[..end])?);
            rest = body[end + 1..].trim_start_matches([',', ' ']);
        }
        Ok(out)
    }

    fn rel(&self, s: &str) -> Result<RelRef, ParseError> {
        let parsed = s
            .rsplit_once('.')
            .and_then(|(r, p)| Some(RelRef::new(r, Partition::from_name(p)?)));
        match parsed {
            Some(r) if !r.relation.is_empty() => Ok(r),
            _ => self.err(format!("bad relation partition `{s}`")),
        }
    }

    fn size(&mut self, s: &str) -> Result<SizeExpr, ParseError> {
        let parts: Vec<&str> = s.split('+').map(str::trim).collect();
        if parts.len() > 1 {
            return Ok(SizeExpr::Sum(
                parts.iter().map(|x| self.size(x)).collect::<Result<_, _>>()?,
            ));
        }
        let s = parts[0];
        let inner = |pre: &str, s: &'_ str| -> Option<(String, String)> {
            let body = s.strip_prefix(pre)?.strip_prefix('(')?;
            let end = body.find(')')?;
            Some((body[..end].to_string(), body[end + 1..].to_string()))
        };
        if let Some((arg, rest)) = inner("size", s) {
            if let Some(factor) = rest.strip_prefix('*') {
                let Ok(o) = factor.trim().parse::<f64>() else {
                    return self.err(format!("bad factor `{factor}`"));
                };
                return Ok(SizeExpr::Scaled(self.reg(&arg)?, o));
            }
            if !rest.trim().is_empty() {
                return self.err(format!("trailing `{rest}`"));
            }
            return if arg.contains('.') {
                Ok(SizeExpr::Rel(self.rel(&arg)?))
            } else {
                Ok(SizeExpr::Size(self.reg(&arg)?))
            };
        }
        if let Some((arg, _)) = inner("last", s) {
            return Ok(SizeExpr::Last(self.reg(&arg)?));
        }
        if let Some((arg, _)) = inner("const", s) {
            if let Ok(n) = arg.trim().parse() {
                return Ok(SizeExpr::Const(n));
            }
        }
        self.err(format!("bad size expression `{s}`"))
    }

    fn instr(&mut self, text: &str) -> Result<Instr, ParseError> {
        let text = text.trim();
        let text = text.strip_prefix("static ").unwrap_or(text);
        let (lhs, rhs) = match text.split_once("<-") {
            Some((l, r)) => (Some(l.trim()), r.trim()),
            None => (None, text),
        };
        let name_end = rhs.find(['<', '(']).unwrap_or(rhs.len());
        let op = &rhs[..name_end];
        let mut rest = &rhs[name_end..];
        let mut param = "";
        if let Some(r) = rest.strip_prefix('<') {
            let Some(end) = r.find('>') else {
                return self.err("unclosed `<`");
            };
            param = &r[..end];
            rest = &r[end + 1..];
        }
        let Some(args) = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')) else {
            return self.err(format!("expected an argument list in `{text}`"));
        };
        let dst_groups = match lhs {
            Some(l) => self.groups(l)?,
            None => Vec::new(),
        };
        let argv: Vec<&str> = args.split(';').map(str::trim).collect();
        let want = |n: usize, this: &Self| -> Result<(), ParseError> {
            if argv.len() != n || dst_groups.len() != usize::from(lhs.is_some()) && op != "eval" && op != "diff" {
                return this.err(format!("`{op}` has the wrong number of operands"));
            }
            Ok(())
        };
        let dst = |k: usize| dst_groups.get(k).cloned().unwrap_or_default();
        Ok(match op {
            "alloc" => {
                let Some(body) = args.strip_prefix('[') else {
                    return self.err("alloc expects a register group");
                };
                let Some(end) = body.find(']') else {
                    return self.err("unclosed `[`");
                };
                let dsts = self.regs(&body[..end])?;
                let size_text = body[end + 1..].trim().trim_start_matches(',');
                Instr::Alloc {
                    dsts,
                    size: self.size(size_text.trim())?,
                }
            }
            "load" => Instr::Load {
                rel: self.rel(param)?,
                dsts: dst(0),
            },
            "store" => Instr::Store {
                rel: self.rel(param)?,
                srcs: self.regs(args)?,
            },
            "eval" => {
                let func = if let Some(body) = param.strip_prefix("perm(").and_then(|b| b.strip_suffix(')')) {
                    let cols: Result<Vec<usize>, _> = body
                        .split(',')
                        .map(str::trim)
                        .filter(|c| !c.is_empty())
                        .map(str::parse)
                        .collect();
                    match cols {
                        Ok(c) => EvalFn::Permute(c),
                        Err(_) => return self.err(format!("bad permutation `{param}`")),
                    }
                } else if let Some(body) = param.strip_prefix("bc(").and_then(|b| b.strip_suffix(')')) {
                    match BytecodeProgram::parse(body) {
                        Ok(b) => EvalFn::Bytecode(b),
                        Err(e) => return self.err(e.to_string()),
                    }
                } else {
                    return self.err(format!("bad eval function `{param}`"));
                };
                let mask = match dst_groups.get(1).map(Vec::as_slice) {
                    None => None,
                    Some([m]) => Some(*m),
                    Some(_) => return self.err("mask group must hold one register"),
                };
                Instr::Eval {
                    dsts: dst(0),
                    mask,
                    func,
                    srcs: self.regs(args)?,
                }
            }
            "copy" => Instr::Copy {
                dsts: dst(0),
                srcs: self.groups(args)?,
            },
            "gather" if param.is_empty() => {
                want(2, self)?;
                Instr::Gather {
                    dsts: dst(0),
                    index: self.one(argv[0])?,
                    srcs: self.regs(argv[1])?,
                }
            }
            "gather" if param == "otimes" => {
                want(2, self)?;
                let d = dst(0);
                let [dst] = d.as_slice() else {
                    return self.err("gather<otimes> writes one register");
                };
                Instr::GatherReduce {
                    dst: *dst,
                    indices: self.two(argv[0])?,
                    srcs: self.two(argv[1])?,
                }
            }
            "build" => {
                let d = dst(0);
                let [dst] = d.as_slice() else {
                    return self.err("build writes one register");
                };
                Instr::Build {
                    dst: *dst,
                    keys: self.regs(args)?,
                }
            }
            "count" => {
                want(3, self)?;
                Instr::Count {
                    dst: self.only(&dst(0))?,
                    probe: self.regs(argv[0])?,
                    index: self.one(argv[1])?,
                    build: self.regs(argv[2])?,
                }
            }
            "scan" => Instr::Scan {
                dst: self.only(&dst(0))?,
                src: self.one(args)?,
            },
            "join" => {
                want(5, self)?;
                let Ok(width) = param.parse() else {
                    return self.err(format!("bad join width `{param}`"));
                };
                let d = dst(0);
                let [a, b] = d.as_slice() else {
                    return self.err("join writes two registers");
                };
                Instr::Join {
                    width,
                    dsts: [*a, *b],
                    probe: self.regs(argv[0])?,
                    build: self.regs(argv[1])?,
                    index: self.one(argv[2])?,
                    counts: self.one(argv[3])?,
                    offsets: self.one(argv[4])?,
                }
            }
            "sort" => Instr::Sort {
                dsts: dst(0),
                srcs: self.regs(args)?,
            },
            "unique" => Instr::Unique {
                dsts: dst(0),
                srcs: self.regs(args)?,
            },
            "merge" => {
                want(2, self)?;
                Instr::Merge {
                    dsts: dst(0),
                    a: self.regs(argv[0])?,
                    b: self.regs(argv[1])?,
                }
            }
            "compact" => {
                want(2, self)?;
                Instr::Compact {
                    dsts: dst(0),
                    mask: self.one(argv[0])?,
                    srcs: self.regs(argv[1])?,
                }
            }
            "diff" => {
                if dst_groups.len() != 2 || argv.len() != 2 {
                    return self.err("diff takes two output and two input tables");
                }
                Instr::Diff {
                    kept: dst(0),
                    fresh: dst(1),
                    old: self.regs(argv[0])?,
                    cand: self.regs(argv[1])?,
                }
            }
            "prune" => {
                let mut tables = argv
                    .iter()
                    .map(|a| self.regs(a))
                    .collect::<Result<Vec<_>, _>>()?;
                let cand = tables.remove(0);
                Instr::Prune {
                    dsts: dst(0),
                    cand,
                    against: tables,
                }
            }
            _ => return self.err(format!("unknown instruction `{op}`")),
        })
    }

    fn only(&self, regs: &[Reg]) -> Result<Reg, ParseError> {
        match regs {
            [r] => Ok(*r),
            _ => self.err("expected one destination register"),
        }
    }
}

/// Parses any number of programs.
pub fn parse_listing(text: &str) -> Result<Vec<ApmProgram>, ParseError> {
    let mut out = Vec::new();
    let mut current: Option<(ApmProgram, Vec<Option<RegKind>>, bool)> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |m: &str| ParseError {
            line,
            message: m.to_string(),
        };
        if let Some(name) = t.strip_prefix("program ") {
            if current.is_some() {
                return Err(err("`program` inside a program"));
            }
            current = Some((ApmProgram::new(name.trim()), Vec::new(), false));
            continue;
        }
        let Some((prog, kinds, seen_epilogue)) = current.as_mut() else {
            return Err(err("instruction outside a program"));
        };
        if t == "end" {
            let (mut prog, kinds, seen) = current.take().unwrap();
            if !seen {
                prog.epilogue = prog.instrs.len();
            }
            prog.kinds = kinds.into_iter().map(|k| k.unwrap_or(RegKind::Value)).collect();
            out.push(prog);
            continue;
        }
        if t == "epilogue" {
            prog.epilogue = prog.instrs.len();
            *seen_epilogue = true;
            continue;
        }
        let mut lp = LineParser { line, kinds };
        if let Some(names) = t.strip_prefix("static ").filter(|r| !r.contains('(')) {
            let regs: BTreeSet<Reg> = names
                .split_whitespace()
                .map(|s| lp.reg(s))
                .collect::<Result<_, _>>()?;
            prog.statics.extend(regs);
            continue;
        }
        prog.instrs.push(lp.instr(t)?);
    }
    if current.is_some() {
        return Err(ParseError {
            line: text.lines().count(),
            message: "missing `end`".into(),
        });
    }
    Ok(out)
}

pub fn parse_program(text: &str) -> Result<ApmProgram, ParseError> {
    let mut all = parse_listing(text)?;
    if all.len() != 1 {
        return Err(ParseError {
            line: 1,
            message: format!("expected one program, found {}", all.len()),
        });
    }
    Ok(all.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
program s0.step
static v0 v1 t2 h3
  static alloc([v0, v1, t2], size(edge.stable))
  static [v0, v1, t2] <- load<edge.stable>()
  static alloc([h3], size(v0)*2)
  static [h3] <- build(v0)
  alloc([v4, v5, t6], size(path.recent))
  [v4, v5, t6] <- load<path.recent>()
  alloc([v7, v8], size(t6))
  [v7, v8] <- eval<perm(1, 0)>(v4, v5)
  alloc([i9, i10], size(v7))
  [i9] <- count(v7; h3; v0)
  [i10] <- scan(i9)
  alloc([i11, i12, v13, v14, v15, t16], last(i10))
  [i11, i12] <- join<1>(v7; v0; h3; i9; i10)
  [v13, v14] <- gather(i11; v0, v1)
  [v15] <- gather(i12; v8)
  [t16] <- gather<otimes>(i11, i12; t2, t6)
  alloc([v17, v18, t19], size(t16))
  [v17, v18] [i20] <- eval<bc(ld.i 2; emit 0; ld.i 1; emit 1; ld.i 0; const.i 1; div; emit 2)>(v14, v15, v13)
  alloc([i20], size(t16) + const(0))
  [t19] <- copy([t16])
epilogue
  alloc([v21, v22, t23], size(path.stable) + size(path.recent))
  [v21, v22, t23] <- merge(v17, v18, t19; v17, v18, t19)
  store<path.delta>(v21, v22, t23)
end
";

    #[test]
    fn round_trip_is_a_fixed_point() {
        let p = parse_program(SAMPLE).unwrap();
        let printed = p.to_text();
        let again = parse_program(&printed).unwrap();
        assert_eq!(again, p);
        assert_eq!(again.to_text(), printed);
        assert_eq!(p.instrs.len(), 23);
        assert_eq!(p.epilogue, 20);
        assert_eq!(p.kind(Reg(3)), RegKind::Hash);
        assert!(p.is_static(Reg(3)));
    }

    #[test]
    fn errors_carry_the_line() {
        let e = parse_program("program x\n  [v0] <- frobnicate(v1)\nend\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_program("program x\n  [v0] <- load<edge.nowhere>()\nend\n").unwrap_err();
        assert!(e.message.contains("edge.nowhere"));
        assert!(parse_program("program x\n").is_err());
    }
}
