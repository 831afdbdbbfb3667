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


use crate::ram::{BinOp, UnOp};
use crate::value::ValueKind;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(String, Span),
    Wildcard(Span),
    Lit(Literal, Span),
    Unary(UnOp, Box<Expr>, Span),
    Binary(BinOp, Box<Expr>, Box<Expr>, Span),
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Var(_, s)
            | Expr::Wildcard(s)
            | Expr::Lit(_, s)
            | Expr::Unary(_, _, s)
            | Expr::Binary(_, _, _, s) => *s,
        }
    }

    /// Variables in order of first appearance.
    pub fn vars(&self, out: &mut Vec<(String, Span)>) {
        match self {
            Expr::Var(v, s) => {
                if !out.iter().any(|(o, _)| o == v) {
                    out.push((v.clone(), *s));
                }
            }
            Expr::Wildcard(_) | Expr::Lit(..) => {}
            Expr::Unary(_, a, _) => a.vars(out),
            Expr::Binary(_, a, b, _) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub relation: String,
    pub args: Vec<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BodyItem {
    Atom(Atom),
    Constraint(Expr),
}

/// A conjunctive rule; disjunctive source rules are split before this.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<BodyItem>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeDecl {
    pub name: String,
    pub kinds: Vec<ValueKind>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactDecl {
    pub relation: String,
    pub values: Vec<Literal>,
    pub prob: Option<f64>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurfaceProgram {
    pub types: Vec<TypeDecl>,
    pub rules: Vec<Rule>,
    pub facts: Vec<FactDecl>,
    pub queries: Vec<(String, Span)>,
}
