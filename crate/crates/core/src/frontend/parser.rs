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


use std::collections::HashMap;

use super::ast::{Atom, BodyItem, Expr, FactDecl, Literal, Rule, Span, SurfaceProgram, TypeDecl};
use super::lexer::{lex, Tok};
use super::{ErrorKind, FrontendError};
use crate::ram::{BinOp, UnOp};
use crate::value::ValueKind;

const KEYWORDS: &[&str] = &["type", "rel", "query", "and", "or", "not", "true", "false"];

enum Formula {
    Item(BodyItem),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

/// Disjunctive normal form: one conjunction per alternative.
fn dnf(f: Formula) -> Vec<Vec<BodyItem>> {
    match f {
        Formula::Item(i) => vec![vec![i]],
        Formula::Or(parts) => parts.into_iter().flat_map(dnf).collect(),
        Formula::And(parts) => {
            let mut acc: Vec<Vec<BodyItem>> = vec![Vec::new()];
            for p in parts {
                let alts = dnf(p);
                let mut next = Vec::with_capacity(acc.len() * alts.len());
                for a in &acc {
                    for b in &alts {
                        let mut c = a.clone();
                        c.extend(b.iter().cloned());
                        next.push(c);
                    }
                }
                acc = next;
            }
            acc
        }
    }
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    aliases: HashMap<String, ValueKind>,
}

type PResult<T> = Result<T, FrontendError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(FrontendError::new(ErrorKind::Syntax, self.span(), message))
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if *self.peek() == t {
            self.advance();
            Ok(())
        } else {
            self.error(format!("expected {}, found {}", t.describe(), self.peek().describe()))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.advance();
            true
        } else {
            false
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                Ok(s)
            }
            t => self.error(format!("expected a name, found {}", t.describe())),
        }
    }

    fn program(&mut self) -> PResult<SurfaceProgram> {
        let mut prog = SurfaceProgram::default();
        while *self.peek() != Tok::Eof {
            if self.is_kw("type") {
                self.advance();
                self.type_item(&mut prog)?;
            } else if self.is_kw("rel") {
                self.advance();
                self.rel_item(&mut prog)?;
            } else if self.is_kw("query") {
                self.advance();
                let span = self.span();
                let name = self.ident()?;
                prog.queries.push((name, span));
            } else {
                return self.error(format!("expected `type`, `rel` or `query`, found {}", self.peek().describe()));
            }
            self.eat(&Tok::Dot);
        }
        Ok(prog)
    }

    fn type_name(&mut self) -> PResult<ValueKind> {
        let span = self.span();
        let name = self.ident()?;
        self.aliases
            .get(&name)
            .copied()
            .or_else(|| ValueKind::from_type_name(&name))
            .ok_or_else(|| FrontendError::new(ErrorKind::Type, span, format!("unknown type `{name}`")))
    }

    fn type_item(&mut self, prog: &mut SurfaceProgram) -> PResult<()> {
        let span = self.span();
        let name = self.ident()?;
        if self.eat(&Tok::Assign) {
            let kind = self.type_name()?;
            self.aliases.insert(name, kind);
            return Ok(());
        }
        self.expect(Tok::LParen)?;
        let mut kinds = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                if matches!(self.peek_at(1), Tok::Colon) {
                    self.ident()?;
                    self.advance();
                }
                kinds.push(self.type_name()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        prog.types.push(TypeDecl { name, kinds, span });
        Ok(())
    }

    fn prob_prefix(&mut self) -> PResult<Option<f64>> {
        let p = match (self.peek(), self.peek_at(1)) {
            (Tok::Float(f), Tok::ColonColon) => *f,
            (Tok::Int(i), Tok::ColonColon) => *i as f64,
            _ => return Ok(None),
        };
        self.advance();
        self.advance();
        Ok(Some(p))
    }

    fn rel_item(&mut self, prog: &mut SurfaceProgram) -> PResult<()> {
        let prob = self.prob_prefix()?;
        let span = self.span();
        let name = self.ident()?;
        if *self.peek() == Tok::Assign && prob.is_none() {
            self.advance();
            return self.fact_set(name, prog);
        }
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.sum()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        let head = Atom {
            relation: name,
            args,
            span,
        };
        if prob.is_none() && matches!(self.peek(), Tok::Turnstile | Tok::Assign) {
            self.advance();
            let body = self.disj()?;
            for conj in dnf(body) {
                prog.rules.push(Rule {
                    head: head.clone(),
                    body: conj,
                    span,
                });
            }
            return Ok(());
        }
        let mut values = Vec::new();
        for a in head.args {
            values.push(literal_of(&a)?);
        }
        prog.facts.push(FactDecl {
            relation: head.relation,
            values,
            prob,
            span,
        });
        Ok(())
    }

    fn fact_set(&mut self, relation: String, prog: &mut SurfaceProgram) -> PResult<()> {
        self.expect(Tok::LBrace)?;
        if self.eat(&Tok::RBrace) {
            return Ok(());
        }
        loop {
            let prob = self.prob_prefix()?;
            let span = self.span();
            let mut values = Vec::new();
            if self.eat(&Tok::LParen) {
                if *self.peek() != Tok::RParen {
                    loop {
                        values.push(literal_of(&self.sum()?)?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen)?;
            } else {
                values.push(literal_of(&self.sum()?)?);
            }
            prog.facts.push(FactDecl {
                relation: relation.clone(),
                values,
                prob,
                span,
            });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RBrace)
    }

    fn disj(&mut self) -> PResult<Formula> {
        let mut parts = vec![self.conj()?];
        while self.is_kw("or") || *self.peek() == Tok::OrOr {
            self.advance();
            parts.push(self.conj()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::Or(parts) })
    }

    fn conj(&mut self) -> PResult<Formula> {
        let mut parts = vec![self.unit()?];
        while self.is_kw("and") || matches!(self.peek(), Tok::Comma | Tok::AndAnd) {
            self.advance();
            parts.push(self.unit()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::And(parts) })
    }

    fn unit(&mut self) -> PResult<Formula> {
        if self.is_kw("not") || *self.peek() == Tok::Bang {
            return self.error("negation is not supported");
        }
        if let (Tok::Ident(name), Tok::LParen) = (self.peek().clone(), self.peek_at(1).clone()) {
            if !KEYWORDS.contains(&name.as_str()) {
                return Ok(Formula::Item(BodyItem::Atom(self.atom()?)));
            }
        }
        if *self.peek() == Tok::LParen {
            let save = self.pos;
            self.advance();
            if let Ok(inner) = self.disj() {
                if self.eat(&Tok::RParen) && !is_operator(self.peek()) {
                    return Ok(inner);
                }
            }
            self.pos = save;
        }
        let lhs = self.sum()?;
        let span = lhs.span();
        let op = match self.peek() {
            Tok::EqEq | Tok::Assign => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            t => return self.error(format!("expected an atom or a comparison, found {}", t.describe())),
        };
        self.advance();
        let rhs = self.sum()?;
        Ok(Formula::Item(BodyItem::Constraint(Expr::Binary(
            op,
            Box::new(lhs),
            Box::new(rhs),
            span,
        ))))
    }

    fn atom(&mut self) -> PResult<Atom> {
        let span = self.span();
        let relation = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let e = fold_negation(self.sum()?);
                if !matches!(e, Expr::Var(..) | Expr::Wildcard(_) | Expr::Lit(..)) {
                    return Err(FrontendError::new(
                        ErrorKind::Syntax,
                        e.span(),
                        "atom arguments must be variables, constants or `_`",
                    ));
                }
                args.push(e);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(Atom { relation, args, span })
    }

    fn sum(&mut self) -> PResult<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let span = self.span();
            self.advance();
            let rhs = self.product()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs), span);
        }
    }

    fn product(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            let span = self.span();
            self.advance();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs), span);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        let span = self.span();
        if self.eat(&Tok::Minus) {
            let inner = self.unary()?;
            return Ok(fold_negation(Expr::Unary(UnOp::Neg, Box::new(inner), span)));
        }
        match self.advance() {
            Tok::Int(i) => Ok(Expr::Lit(Literal::Int(i), span)),
            Tok::Float(f) => Ok(Expr::Lit(Literal::Float(f), span)),
            Tok::Str(s) => Ok(Expr::Lit(Literal::Str(s), span)),
            Tok::Ident(s) if s == "true" => Ok(Expr::Lit(Literal::Int(1), span)),
            Tok::Ident(s) if s == "false" => Ok(Expr::Lit(Literal::Int(0), span)),
            Tok::Ident(s) if s == "_" => Ok(Expr::Wildcard(span)),
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Ok(Expr::Var(s, span)),
            Tok::LParen => {
                let e = self.sum()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            t => Err(FrontendError::new(
                ErrorKind::Syntax,
                span,
                format!("expected an expression, found {}", t.describe()),
            )),
        }
    }
}

fn is_operator(t: &Tok) -> bool {
    matches!(
        t,
        Tok::EqEq
            | Tok::Assign
            | Tok::Ne
            | Tok::Lt
            | Tok::Le
            | Tok::Gt
            | Tok::Ge
            | Tok::Plus
            | Tok::Minus
            | Tok::Star
            | Tok::Slash
    )
}

fn fold_negation(e: Expr) -> Expr {
    match e {
        Expr::Unary(UnOp::Neg, inner, span) => match *inner {
            Expr::Lit(Literal::Int(i), _) => Expr::Lit(Literal::Int(-i), span),
            Expr::Lit(Literal::Float(f), _) => Expr::Lit(Literal::Float(-f), span),
            other => Expr::Unary(UnOp::Neg, Box::new(other), span),
        },
        other => other,
    }
}

fn literal_of(e: &Expr) -> PResult<Literal> {
    match fold_negation(e.clone()) {
        Expr::Lit(l, _) => Ok(l),
        other => Err(FrontendError::new(
            ErrorKind::Syntax,
            other.span(),
            "facts may only contain constants",
        )),
    }
}

/// Parses program text. Disjunctive bodies come back split into one
/// conjunctive rule per alternative.
pub fn parse(text: &str) -> Result<SurfaceProgram, FrontendError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        aliases: HashMap::new(),
    };
    p.program()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG3C: &str = "type Cell = u32
type edge(x: Cell, y: Cell)
type is_endpoint(x: Cell)

rel path(x, y) :-
  edge(x,y) or (path(x, z) and edge(z, y)).
rel endpoints_connected() :- is_endpoint(x),
  is_endpoint(y), path(x, y), x != y.
";

    #[test]
    fn reachability_program() {
        let p = parse(FIG3C).unwrap();
        assert_eq!(p.types.len(), 2);
        assert_eq!(p.types[0].kinds, vec![ValueKind::Int, ValueKind::Int]);
        let path_rules: Vec<&Rule> = p.rules.iter().filter(|r| r.head.relation == "path").collect();
        assert_eq!(path_rules.len(), 2);
        assert_eq!(path_rules[0].body.len(), 1);
        assert_eq!(path_rules[1].body.len(), 2);
        let ec = p.rules.iter().find(|r| r.head.relation == "endpoints_connected").unwrap();
        assert!(ec.head.args.is_empty());
        assert!(matches!(ec.body[3], BodyItem::Constraint(Expr::Binary(BinOp::Ne, ..))));
    }

    #[test]
    fn empty_program() {
        assert_eq!(parse("").unwrap(), SurfaceProgram::default());
        assert_eq!(parse("// nothing\n").unwrap(), SurfaceProgram::default());
    }

    #[test]
    fn facts_in_both_forms() {
        let p = parse("rel edge = {0.97::(0, 1), (1, 2)}\nrel edge(2, -3).\nrel 0.5::edge(4, 5)").unwrap();
        assert_eq!(p.facts.len(), 4);
        assert_eq!(p.facts[0].prob, Some(0.97));
        assert_eq!(p.facts[2].values, vec![Literal::Int(2), Literal::Int(-3)]);
        assert_eq!(p.facts[3].prob, Some(0.5));
    }

    #[test]
    fn parenthesised_comparisons_are_not_groups() {
        let p = parse("rel r(x) :- s(x, y), (x + 1) < y").unwrap();
        assert!(matches!(p.rules[0].body[1], BodyItem::Constraint(_)));
    }

    #[test]
    fn dnf_distributes() {
        let p = parse("rel r(x) :- (a(x) or b(x)) and (c(x) or d(x))").unwrap();
        assert_eq!(p.rules.len(), 4);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = parse("rel r(x) :-\n  s(x) s(y)").unwrap_err();
        assert_eq!(e.kind, ErrorKind::Syntax);
        assert_eq!((e.span.line, e.span.col), (2, 8));
        let e = parse("rel r(x) :- s(x + 1)").unwrap_err();
        assert_eq!(e.kind, ErrorKind::Syntax);
    }
}
