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


//! Stack-machine bytecode for per-row scalar functions.
//!
//! Projections that do more than reorder columns, and every selection
//! predicate, are compiled to a short op sequence and interpreted once per
//! row on a fixed-size stack.

use std::fmt;

use thiserror::Error;

use crate::ram::{BinOp, ScalarExpr, UnOp};
use crate::value::{format_float, Cell, Value, ValueKind};

pub const STACK_CAP: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Load(usize, ValueKind),
    Const(Value),
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Not,
    Neg,
    /// Pops the top of the stack into output column `k`.
    Emit(usize),
}

impl Op {
    fn stack_effect(&self) -> (usize, usize) {
        match self {
            Op::Load(..) | Op::Const(_) => (0, 1),
            Op::Not | Op::Neg => (1, 1),
            Op::Emit(_) => (1, 0),
            _ => (2, 1),
        }
    }

    fn binop(op: BinOp) -> Op {
        match op {
            BinOp::Add => Op::Add,
            BinOp::Sub => Op::Sub,
            BinOp::Mul => Op::Mul,
            BinOp::Div => Op::Div,
            BinOp::Eq => Op::Eq,
            BinOp::Ne => Op::Ne,
            BinOp::Lt => Op::Lt,
            BinOp::Le => Op::Le,
            BinOp::Gt => Op::Gt,
            BinOp::Ge => Op::Ge,
            BinOp::And => Op::And,
            BinOp::Or => Op::Or,
        }
    }

    fn mnemonic(&self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Eq => "eq",
            Op::Ne => "ne",
            Op::Lt => "lt",
            Op::Le => "le",
            Op::Gt => "gt",
            Op::Ge => "ge",
            Op::And => "and",
            Op::Or => "or",
            Op::Not => "not",
            Op::Neg => "neg",
            Op::Load(..) => "ld",
            Op::Const(_) => "const",
            Op::Emit(_) => "emit",
        }
    }
}

fn kind_suffix(k: ValueKind) -> char {
    match k {
        ValueKind::Int => 'i',
        ValueKind::Float => 'f',
        ValueKind::Symbol => 's',
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Load(c, k) => write!(f, "ld.{} {c}", kind_suffix(*k)),
            Op::Const(Value::Int(i)) => write!(f, "const.i {i}"),
            Op::Const(Value::Float(x)) => write!(f, "const.f {}", format_float(*x)),
            Op::Const(Value::Symbol(s)) => write!(f, "const.s {s}"),
            Op::Emit(k) => write!(f, "emit {k}"),
            other => f.write_str(other.mnemonic()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BytecodeError {
    #[error("stack underflow at op {0}")]
    Underflow(usize),
    #[error("stack depth {0} exceeds the limit of {STACK_CAP}")]
    TooDeep(usize),
    #[error("{0} values left on the stack")]
    Unbalanced(usize),
    #[error("output {0} is emitted {1} times")]
    BadEmit(usize, usize),
    #[error("cannot parse op `{0}`")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BytecodeProgram {
    ops: Vec<Op>,
    max_depth: usize,
    outputs: usize,
}

impl BytecodeProgram {
    /// Checks stack discipline and that outputs `0..n` are each emitted once.
    pub fn new(ops: Vec<Op>) -> Result<Self, BytecodeError> {
        let (mut depth, mut max_depth) = (0usize, 0usize);
        let mut emitted: Vec<usize> = Vec::new();
        for (i, op) in ops.iter().enumerate() {
            let (pop, push) = op.stack_effect();
            if depth < pop {
                return Err(BytecodeError::Underflow(i));
            }
            depth = depth - pop + push;
            max_depth = max_depth.max(depth);
            if let Op::Emit(k) = op {
                if emitted.len() <= *k {
                    emitted.resize(k + 1, 0);
                }
                emitted[*k] += 1;
            }
        }
        if max_depth > STACK_CAP {
            return Err(BytecodeError::TooDeep(max_depth));
        }
        if depth != 0 {
            return Err(BytecodeError::Unbalanced(depth));
        }
        if let Some((k, &n)) = emitted.iter().enumerate().find(|(_, &n)| n != 1) {
            return Err(BytecodeError::BadEmit(k, n));
        }
        Ok(Self {
            outputs: emitted.len(),
            ops,
            max_depth,
        })
    }

    /// Compiles one expression per output column over inputs of `kinds`.
    pub fn compile(exprs: &[ScalarExpr], kinds: &[ValueKind]) -> Result<Self, BytecodeError> {
        let mut ops = Vec::new();
        for (k, e) in exprs.iter().enumerate() {
            emit_expr(e, kinds, &mut ops);
            ops.push(Op::Emit(k));
        }
        Self::new(ops)
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Input columns read.
    pub fn inputs(&self) -> usize {
        self.ops
            .iter()
            .filter_map(|o| match o {
                Op::Load(c, _) => Some(c + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn can_fail(&self) -> bool {
        self.ops.contains(&Op::Div)
    }

    /// Evaluates one row. Returns false when the row has no defined
    /// result (division by zero).
    #[inline]
    pub fn run_row(&self, input: impl Fn(usize) -> Cell, out: &mut [Cell]) -> bool {
        let mut stack = [Value::Int(0); STACK_CAP];
        let mut sp = 0usize;
        for op in &self.ops {
            match op {
                Op::Load(c, k) => {
                    stack[sp] = Value::from_cell(*k, input(*c));
                    sp += 1;
                }
                Op::Const(v) => {
                    stack[sp] = *v;
                    sp += 1;
                }
                Op::Emit(k) => {
                    sp -= 1;
                    out[*k] = stack[sp].to_cell();
                }
                Op::Not => stack[sp - 1] = Value::from_bool(!stack[sp - 1].as_bool()),
                Op::Neg => {
                    stack[sp - 1] = match stack[sp - 1] {
                        Value::Int(i) => Value::Int(i.wrapping_neg()),
                        Value::Float(f) => Value::Float(-f),
                        s => s,
                    }
                }
                binary => {
                    sp -= 1;
                    let (a, b) = (stack[sp - 1], stack[sp]);
                    match apply(binary, a, b) {
                        Some(v) => stack[sp - 1] = v,
                        None => return false,
                    }
                }
            }
        }
        true
    }

    pub fn to_text(&self) -> String {
        self.ops.iter().map(|o| o.to_string()).collect::<Vec<_>>().join("; ")
    }

    pub fn parse(text: &str) -> Result<Self, BytecodeError> {
        let mut ops = Vec::new();
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            ops.push(parse_op(part)?);
        }
        Self::new(ops)
    }
}

fn parse_op(s: &str) -> Result<Op, BytecodeError> {
    let bad = || BytecodeError::Parse(s.to_string());
    let (head, arg) = match s.split_once(' ') {
        Some((h, a)) => (h, Some(a.trim())),
        None => (s, None),
    };
    let num = || arg.and_then(|a| a.parse::<usize>().ok()).ok_or_else(bad);
    Ok(match head {
        "ld.i" => Op::Load(num()?, ValueKind::Int),
        "ld.f" => Op::Load(num()?, ValueKind::Float),
        "ld.s" => Op::Load(num()?, ValueKind::Symbol),
        "const.i" => Op::Const(Value::Int(arg.and_then(|a| a.parse().ok()).ok_or_else(bad)?)),
        "const.f" => Op::Const(Value::Float(arg.and_then(|a| a.parse().ok()).ok_or_else(bad)?)),
        "const.s" => Op::Const(Value::Symbol(arg.and_then(|a| a.parse().ok()).ok_or_else(bad)?)),
        "emit" => Op::Emit(num()?),
        "add" => Op::Add,
        "sub" => Op::Sub,
        "mul" => Op::Mul,
        "div" => Op::Div,
        "eq" => Op::Eq,
        "ne" => Op::Ne,
        "lt" => Op::Lt,
        "le" => Op::Le,
        "gt" => Op::Gt,
        "ge" => Op::Ge,
        "and" => Op::And,
        "or" => Op::Or,
        "not" => Op::Not,
        "neg" => Op::Neg,
        _ => return Err(bad()),
    })
}

fn emit_expr(e: &ScalarExpr, kinds: &[ValueKind], ops: &mut Vec<Op>) {
    match e {
        ScalarExpr::Col(c) => ops.push(Op::Load(*c, kinds[*c])),
        ScalarExpr::Const(v) => ops.push(Op::Const(*v)),
        ScalarExpr::Unary(op, a) => {
            emit_expr(a, kinds, ops);
            ops.push(if *op == UnOp::Neg { Op::Neg } else { Op::Not });
        }
        ScalarExpr::Binary(op, a, b) => {
            emit_expr(a, kinds, ops);
            emit_expr(b, kinds, ops);
            ops.push(Op::binop(*op));
        }
    }
}

fn as_f64(v: Value) -> f64 {
    match v {
        Value::Int(i) => i as f64,
        Value::Float(f) => f,
        Value::Symbol(s) => s as f64,
    }
}

#[inline]
fn apply(op: &Op, a: Value, b: Value) -> Option<Value> {
    use std::cmp::Ordering;
    let arith = |fi: fn(i64, i64) -> i64, ff: fn(f64, f64) -> f64| match (a, b) {
        (Value::Int(x), Value::Int(y)) => Value::Int(fi(x, y)),
        _ => Value::Float(ff(as_f64(a), as_f64(b))),
    };
    let cmp = || -> Ordering {
        match (a, b) {
            (Value::Int(x), Value::Int(y)) => x.cmp(&y),
            (Value::Symbol(x), Value::Symbol(y)) => x.cmp(&y),
            _ => as_f64(a).total_cmp(&as_f64(b)),
        }
    };
    Some(match op {
        Op::Add => arith(i64::wrapping_add, |x, y| x + y),
        Op::Sub => arith(i64::wrapping_sub, |x, y| x - y),
        Op::Mul => arith(i64::wrapping_mul, |x, y| x * y),
        Op::Div => match (a, b) {
            (Value::Int(_), Value::Int(0)) => return None,
            (Value::Int(x), Value::Int(y)) => Value::Int(x.wrapping_div(y)),
            _ => {
                let d = as_f64(b);
                if d == 0.0 {
                    return None;
                }
                Value::Float(as_f64(a) / d)
            }
        },
        Op::Eq => Value::from_bool(cmp() == Ordering::Equal),
        Op::Ne => Value::from_bool(cmp() != Ordering::Equal),
        Op::Lt => Value::from_bool(cmp() == Ordering::Less),
        Op::Le => Value::from_bool(cmp() != Ordering::Greater),
        Op::Gt => Value::from_bool(cmp() == Ordering::Greater),
        Op::Ge => Value::from_bool(cmp() != Ordering::Less),
        Op::And => Value::from_bool(a.as_bool() && b.as_bool()),
        Op::Or => Value::from_bool(a.as_bool() || b.as_bool()),
        _ => unreachable!("not a binary op"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(vals: &[i64]) -> Vec<Cell> {
        vals.iter().map(|&v| Value::Int(v).to_cell()).collect()
    }

    fn run(p: &BytecodeProgram, row: &[Cell]) -> Option<Vec<Value>> {
        let mut out = vec![0; p.outputs()];
        p.run_row(|c| row[c], &mut out)
            .then(|| out.iter().map(|&c| Value::from_cell(ValueKind::Int, c)).collect())
    }

    const II: [ValueKind; 2] = [ValueKind::Int, ValueKind::Int];

    #[test]
    fn addition() {
        let p = BytecodeProgram::compile(
            &[ScalarExpr::bin(BinOp::Add, ScalarExpr::Col(0), ScalarExpr::Col(1))],
            &II,
        )
        .unwrap();
        assert_eq!(run(&p, &cells(&[2, 3])), Some(vec![Value::Int(5)]));
        assert_eq!(p.max_depth(), 2);
    }

    #[test]
    fn comparison_mask() {
        let p = BytecodeProgram::compile(
            &[ScalarExpr::bin(BinOp::Lt, ScalarExpr::Col(0), ScalarExpr::Col(1))],
            &II,
        )
        .unwrap();
        assert_eq!(run(&p, &cells(&[1, 2])), Some(vec![Value::Int(1)]));
        assert_eq!(run(&p, &cells(&[3, 2])), Some(vec![Value::Int(0)]));
    }

    #[test]
    fn division_by_zero_fails_the_row() {
        let p = BytecodeProgram::compile(
            &[ScalarExpr::bin(BinOp::Div, ScalarExpr::Col(0), ScalarExpr::Col(1))],
            &II,
        )
        .unwrap();
        assert!(p.can_fail());
        assert_eq!(run(&p, &cells(&[7, 2])), Some(vec![Value::Int(3)]));
        assert_eq!(run(&p, &cells(&[7, 0])), None);
    }

    #[test]
    fn mixed_arithmetic_promotes_to_float() {
        let p = BytecodeProgram::compile(
            &[ScalarExpr::bin(
                BinOp::Mul,
                ScalarExpr::Col(0),
                ScalarExpr::Const(Value::Float(0.5)),
            )],
            &II,
        )
        .unwrap();
        let mut out = [0];
        assert!(p.run_row(|_| Value::Int(3).to_cell(), &mut out));
        assert_eq!(Value::from_cell(ValueKind::Float, out[0]), Value::Float(1.5));
    }

    #[test]
    fn stack_discipline_is_checked() {
        assert_eq!(BytecodeProgram::new(vec![Op::Add]), Err(BytecodeError::Underflow(0)));
        assert!(matches!(
            BytecodeProgram::new(vec![Op::Const(Value::Int(1))]),
            Err(BytecodeError::Unbalanced(1))
        ));
        let deep: Vec<Op> = (0..33)
            .map(|_| Op::Const(Value::Int(1)))
            .chain((0..32).map(|_| Op::Add))
            .chain([Op::Emit(0)])
            .collect();
        assert_eq!(BytecodeProgram::new(deep), Err(BytecodeError::TooDeep(33)));
    }

    #[test]
    fn text_round_trip() {
        let p = BytecodeProgram::compile(
            &[
                ScalarExpr::Col(1),
                ScalarExpr::bin(BinOp::Ne, ScalarExpr::Col(0), ScalarExpr::Const(Value::Float(2.5))),
            ],
            &[ValueKind::Float, ValueKind::Symbol],
        )
        .unwrap();
        let text = p.to_text();
        assert_eq!(text, "ld.s 1; emit 0; ld.f 0; const.f 2.5; ne; emit 1");
        assert_eq!(BytecodeProgram::parse(&text).unwrap(), p);
    }
}
