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


//! Surface syntax: a small Datalog dialect.
//!
//! ```text
//! type Cell = u32
//! type edge(x: Cell, y: Cell)
//! rel edge = {0.9::(0, 1), (1, 2)}
//! rel path(x, y) :- edge(x, y) or (path(x, z) and edge(z, y)).
//! query path
//! ```
//!
//! Bodies combine atoms and comparisons with `and` (or `,`), `or` and
//! parentheses; disjunctions are split into one rule per disjunct. Atom
//! arguments are variables, constants or `_`; head arguments may be
//! arithmetic over bound variables. Comments use `//` and `/* */`.

mod ast;
mod lexer;
mod parser;
mod planner;

use std::fmt;

use thiserror::Error;

pub use ast::{Atom, BodyItem, Expr, FactDecl, Literal, Rule, Span, SurfaceProgram, TypeDecl};
pub use parser::parse;
pub use planner::{plan, PlannedProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    RangeRestriction,
    UnknownRelation,
    Type,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Syntax => "syntax error",
            ErrorKind::RangeRestriction => "unbound variable",
            ErrorKind::UnknownRelation => "unknown relation",
            ErrorKind::Type => "type error",
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{}:{}: {kind}: {message}", span.line, span.col)]
pub struct FrontendError {
    pub kind: ErrorKind,
    pub span: Span,
    pub message: String,
}

impl FrontendError {
    pub(crate) fn new(kind: ErrorKind, span: Span, message: impl Into<String>) -> Self {
        Self {
            kind,
            span,
            message: message.into(),
        }
    }
}

/// A non-fatal finding.
#[derive(Debug, Clone, PartialEq)]
pub struct Warning {
    pub span: Span,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: warning: {}", self.span.line, self.span.col, self.message)
    }
}

/// Parses and plans a program.
pub fn compile_source(text: &str) -> Result<PlannedProgram, FrontendError> {
    plan(&parse(text)?)
}
