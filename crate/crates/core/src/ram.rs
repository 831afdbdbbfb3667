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


//! Relational-algebra rules.
//!
//! A rule computes one target relation from a dataflow tree of
//! projections, selections and joins over relations. Joins are prefix
//! joins: `Join(w, l, r)` matches the first `w` columns of both sides and
//! outputs all columns of `l` followed by the non-key columns of `r`.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use thiserror::Error;

use crate::db::Schema;
use crate::value::{format_float, SymbolTable, Value, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
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
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div)
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

/// A scalar function of one input tuple.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarExpr {
    Col(usize),
    Const(Value),
    Unary(UnOp, Box<ScalarExpr>),
    Binary(BinOp, Box<ScalarExpr>, Box<ScalarExpr>),
}

impl ScalarExpr {
    pub fn bin(op: BinOp, a: ScalarExpr, b: ScalarExpr) -> Self {
        ScalarExpr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn truth(b: bool) -> Self {
        ScalarExpr::Const(Value::from_bool(b))
    }

    /// Result kind over a tuple of the given column kinds.
    pub fn kind(&self, input: &[ValueKind]) -> Result<ValueKind, String> {
        match self {
            ScalarExpr::Col(i) => input
                .get(*i)
                .copied()
                .ok_or_else(|| format!("column #{i} out of range for arity {}", input.len())),
            ScalarExpr::Const(v) => Ok(v.kind()),
            ScalarExpr::Unary(UnOp::Neg, a) => match a.kind(input)? {
                ValueKind::Symbol => Err("cannot negate a symbol".into()),
                k => Ok(k),
            },
            ScalarExpr::Unary(UnOp::Not, a) => {
                a.kind(input)?;
                Ok(ValueKind::Int)
            }
            ScalarExpr::Binary(op, a, b) => {
                let (ka, kb) = (a.kind(input)?, b.kind(input)?);
                if op.is_arithmetic() {
                    match (ka, kb) {
                        (ValueKind::Int, ValueKind::Int) => Ok(ValueKind::Int),
                        (ValueKind::Symbol, _) | (_, ValueKind::Symbol) => {
                            Err(format!("operator `{}` applied to a symbol", op.symbol()))
                        }
                        _ => Ok(ValueKind::Float),
                    }
                } else if op.is_comparison() {
                    let symbolic = (ka == ValueKind::Symbol) as u8 + (kb == ValueKind::Symbol) as u8;
                    if symbolic == 1 {
                        return Err(format!("comparison `{}` between a symbol and a number", op.symbol()));
                    }
                    Ok(ValueKind::Int)
                } else {
                    Ok(ValueKind::Int)
                }
            }
        }
    }

    /// Highest column referenced, if any.
    pub fn max_col(&self) -> Option<usize> {
        match self {
            ScalarExpr::Col(i) => Some(*i),
            ScalarExpr::Const(_) => None,
            ScalarExpr::Unary(_, a) => a.max_col(),
            ScalarExpr::Binary(_, a, b) => a.max_col().max(b.max_col()),
        }
    }

    pub fn contains_division(&self) -> bool {
        match self {
            ScalarExpr::Col(_) | ScalarExpr::Const(_) => false,
            ScalarExpr::Unary(_, a) => a.contains_division(),
            ScalarExpr::Binary(op, a, b) => {
                *op == BinOp::Div || a.contains_division() || b.contains_division()
            }
        }
    }

    /// Rewrites every column reference through `f`.
    pub fn map_cols(&self, f: &impl Fn(usize) -> usize) -> ScalarExpr {
        match self {
            ScalarExpr::Col(i) => ScalarExpr::Col(f(*i)),
            ScalarExpr::Const(v) => ScalarExpr::Const(*v),
            ScalarExpr::Unary(op, a) => ScalarExpr::Unary(*op, Box::new(a.map_cols(f))),
            ScalarExpr::Binary(op, a, b) => {
                ScalarExpr::Binary(*op, Box::new(a.map_cols(f)), Box::new(b.map_cols(f)))
            }
        }
    }

    fn write(&self, out: &mut String, symbols: Option<&SymbolTable>) {
        match self {
            ScalarExpr::Col(i) => {
                let _ = write!(out, "#{i}");
            }
            ScalarExpr::Const(v) => out.push_str(&render_const(v, symbols)),
            ScalarExpr::Unary(op, a) => {
                out.push_str(if *op == UnOp::Neg { "(neg " } else { "(not " });
                a.write(out, symbols);
                out.push(')');
            }
            ScalarExpr::Binary(op, a, b) => {
                let _ = write!(out, "({} ", op.symbol());
                a.write(out, symbols);
                out.push(' ');
                b.write(out, symbols);
                out.push(')');
            }
        }
    }
}

fn render_const(v: &Value, symbols: Option<&SymbolTable>) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Float(f) => format_float(*f),
        Value::Symbol(id) => match symbols.and_then(|s| s.resolve(*id)) {
            Some(s) => format!("{s:?}"),
            None => format!("sym{id}"),
        },
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write(&mut s, None);
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RamExpr {
    Relation(String),
    Project(Vec<ScalarExpr>, Box<RamExpr>),
    Select(ScalarExpr, Box<RamExpr>),
    Join(usize, Box<RamExpr>, Box<RamExpr>),
    Union(Box<RamExpr>, Box<RamExpr>),
    Product(Box<RamExpr>, Box<RamExpr>),
    Intersect(Box<RamExpr>, Box<RamExpr>),
}

impl RamExpr {
    pub fn relation(name: impl Into<String>) -> Self {
        RamExpr::Relation(name.into())
    }

    pub fn project(cols: Vec<ScalarExpr>, child: RamExpr) -> Self {
        RamExpr::Project(cols, Box::new(child))
    }

    /// Projection onto the given columns, in order.
    pub fn permute(cols: &[usize], child: RamExpr) -> Self {
        RamExpr::Project(cols.iter().map(|&c| ScalarExpr::Col(c)).collect(), Box::new(child))
    }

    pub fn select(pred: ScalarExpr, child: RamExpr) -> Self {
        RamExpr::Select(pred, Box::new(child))
    }

    pub fn join(w: usize, l: RamExpr, r: RamExpr) -> Self {
        RamExpr::Join(w, Box::new(l), Box::new(r))
    }

    pub fn union(l: RamExpr, r: RamExpr) -> Self {
        RamExpr::Union(Box::new(l), Box::new(r))
    }

    pub fn product(l: RamExpr, r: RamExpr) -> Self {
        RamExpr::Product(Box::new(l), Box::new(r))
    }

    pub fn intersect(l: RamExpr, r: RamExpr) -> Self {
        RamExpr::Intersect(Box::new(l), Box::new(r))
    }

    /// Relations read by this expression, left to right, with repeats.
    pub fn relations(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_relations(&mut out);
        out
    }

    fn collect_relations<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            RamExpr::Relation(r) => out.push(r),
            RamExpr::Project(_, c) | RamExpr::Select(_, c) => c.collect_relations(out),
            RamExpr::Join(_, l, r)
            | RamExpr::Union(l, r)
            | RamExpr::Product(l, r)
            | RamExpr::Intersect(l, r) => {
                l.collect_relations(out);
                r.collect_relations(out);
            }
        }
    }

    /// Output column kinds, checking every node on the way.
    pub fn kinds(&self, schemas: &SchemaMap) -> Result<Vec<ValueKind>, (String, String)> {
        self.kinds_at(schemas, "0")
    }

    fn kinds_at(&self, schemas: &SchemaMap, path: &str) -> Result<Vec<ValueKind>, (String, String)> {
        let fail = |m: String| Err((path.to_string(), m));
        let child = |i: usize| format!("{path}.{i}");
        match self {
            RamExpr::Relation(r) => match schemas.get(r.as_str()) {
                Some(s) => Ok(s.kinds.clone()),
                None => fail(format!("unknown relation `{r}`")),
            },
            RamExpr::Project(cols, c) => {
                let input = c.kinds_at(schemas, &child(0))?;
                cols.iter()
                    .map(|e| e.kind(&input).map_err(|m| (path.to_string(), m)))
                    .collect()
            }
            RamExpr::Select(pred, c) => {
                let input = c.kinds_at(schemas, &child(0))?;
                if let Err(m) = pred.kind(&input) {
                    return fail(m);
                }
                Ok(input)
            }
            RamExpr::Join(w, l, r) => {
                let lk = l.kinds_at(schemas, &child(0))?;
                let rk = r.kinds_at(schemas, &child(1))?;
                if lk.len() < *w || rk.len() < *w {
                    return fail(format!(
                        "join width {w} exceeds operand arity ({}, {})",
                        lk.len(),
                        rk.len()
                    ));
                }
                if lk[..*w] != rk[..*w] {
                    return fail("join key kinds differ".into());
                }
                Ok(lk.iter().chain(&rk[*w..]).copied().collect())
            }
            RamExpr::Product(l, r) => {
                let lk = l.kinds_at(schemas, &child(0))?;
                let rk = r.kinds_at(schemas, &child(1))?;
                Ok(lk.into_iter().chain(rk).collect())
            }
            RamExpr::Union(l, r) | RamExpr::Intersect(l, r) => {
                let lk = l.kinds_at(schemas, &child(0))?;
                let rk = r.kinds_at(schemas, &child(1))?;
                if lk.len() != rk.len() {
                    return fail(format!("operand arities differ: {} vs {}", lk.len(), rk.len()));
                }
                if lk != rk {
                    return fail("operand column kinds differ".into());
                }
                Ok(lk)
            }
        }
    }

    fn write_tree(&self, out: &mut String, depth: usize, symbols: Option<&SymbolTable>) {
        let pad = "  ".repeat(depth);
        out.push_str(&pad);
        match self {
            RamExpr::Relation(r) => {
                let _ = write!(out, "(relation {r})");
            }
            RamExpr::Project(cols, c) => {
                out.push_str("(project (");
                for (i, e) in cols.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    e.write(out, symbols);
                }
                out.push_str(")\n");
                c.write_tree(out, depth + 1, symbols);
                out.push(')');
            }
            RamExpr::Select(p, c) => {
                out.push_str("(select ");
                p.write(out, symbols);
                out.push('\n');
                c.write_tree(out, depth + 1, symbols);
                out.push(')');
            }
            RamExpr::Join(w, l, r) => self.write_binary(&format!("join {w}"), l, r, out, depth, symbols),
            RamExpr::Union(l, r) => self.write_binary("union", l, r, out, depth, symbols),
            RamExpr::Product(l, r) => self.write_binary("product", l, r, out, depth, symbols),
            RamExpr::Intersect(l, r) => self.write_binary("intersect", l, r, out, depth, symbols),
        }
    }

    fn write_binary(
        &self,
        head: &str,
        l: &RamExpr,
        r: &RamExpr,
        out: &mut String,
        depth: usize,
        symbols: Option<&SymbolTable>,
    ) {
        let _ = writeln!(out, "({head}");
        l.write_tree(out, depth + 1, symbols);
        out.push('\n');
        r.write_tree(out, depth + 1, symbols);
        out.push(')');
    }

    /// Single-line s-expression.
    pub fn to_sexpr(&self) -> String {
        let mut s = String::new();
        self.write_tree(&mut s, 0, None);
        s.split('\n').map(str::trim).collect::<Vec<_>>().join(" ")
    }
}

pub type SchemaMap = HashMap<String, Schema>;

pub fn schema_map(schemas: &[Schema]) -> SchemaMap {
    schemas.iter().map(|s| (s.name.clone(), s.clone())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamRule {
    pub target: String,
    pub expr: RamExpr,
}

impl RamRule {
    pub fn new(target: impl Into<String>, expr: RamExpr) -> Self {
        Self {
            target: target.into(),
            expr,
        }
    }

    pub fn to_sexpr(&self) -> String {
        format!("(rule {} {})", self.target, self.expr.to_sexpr())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamStratum {
    /// Relations defined by this stratum.
    pub relations: Vec<String>,
    pub rules: Vec<RamRule>,
    /// Whether some rule reads a relation of this stratum.
    pub recursive: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RamProgram {
    pub strata: Vec<RamStratum>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("rule {rule} ({target}), node {path}: {message}")]
pub struct ValidationError {
    pub rule: usize,
    pub target: String,
    pub path: String,
    pub message: String,
}

impl RamProgram {
    pub fn rules(&self) -> impl Iterator<Item = &RamRule> {
        self.strata.iter().flat_map(|s| &s.rules)
    }

    /// Checks arities and kinds of every node against `schemas`.
    pub fn validate(&self, schemas: &SchemaMap) -> Result<(), Vec<ValidationError>> {
        let mut errors = Vec::new();
        for (i, rule) in self.rules().enumerate() {
            let err = |path: String, message: String| ValidationError {
                rule: i,
                target: rule.target.clone(),
                path,
                message,
            };
            match rule.expr.kinds(schemas) {
                Err((path, m)) => errors.push(err(path, m)),
                Ok(kinds) => match schemas.get(&rule.target) {
                    None => errors.push(err("0".into(), format!("unknown target `{}`", rule.target))),
                    Some(s) if s.kinds != kinds => errors.push(err(
                        "0".into(),
                        format!(
                            "rule yields ({}) but `{}` is ({})",
                            kind_list(&kinds),
                            rule.target,
                            kind_list(&s.kinds)
                        ),
                    )),
                    Some(_) => {}
                },
            }
        }
        let mut defined: HashSet<&str> = HashSet::new();
        let targets: HashSet<&str> = self.rules().map(|r| r.target.as_str()).collect();
        for stratum in &self.strata {
            let local: HashSet<&str> = stratum.relations.iter().map(String::as_str).collect();
            for rule in &stratum.rules {
                for rel in rule.expr.relations() {
                    if targets.contains(rel) && !local.contains(rel) && !defined.contains(rel) {
                        errors.push(ValidationError {
                            rule: 0,
                            target: rule.target.clone(),
                            path: "0".into(),
                            message: format!("`{rel}` is read before the stratum defining it"),
                        });
                    }
                }
            }
            defined.extend(local);
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Multi-line dump, one node per line.
    pub fn dump(&self, symbols: Option<&SymbolTable>) -> String {
        let mut out = String::new();
        for (i, s) in self.strata.iter().enumerate() {
            let _ = writeln!(
                out,
                "(stratum {i} ({}){}",
                s.relations.join(" "),
                if s.recursive { " recursive" } else { "" }
            );
            for rule in &s.rules {
                let _ = writeln!(out, "  (rule {}", rule.target);
                let mut body = String::new();
                rule.expr.write_tree(&mut body, 2, symbols);
                out.push_str(&body);
                out.push_str(")\n");
            }
            out.push_str(")\n");
        }
        out
    }
}

fn kind_list(kinds: &[ValueKind]) -> String {
    kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
}

/// Groups rules into strata: strongly connected components of the
/// predicate dependency graph, producers first.
pub fn stratify(rules: Vec<RamRule>) -> RamProgram {
    let mut graph: DiGraph<String, ()> = DiGraph::new();
    let mut nodes: HashMap<String, NodeIndex> = HashMap::new();
    for rule in &rules {
        if !nodes.contains_key(&rule.target) {
            nodes.insert(rule.target.clone(), graph.add_node(rule.target.clone()));
        }
    }
    let mut self_loops: HashSet<NodeIndex> = HashSet::new();
    for rule in &rules {
        let to = nodes[&rule.target];
        for rel in rule.expr.relations() {
            if let Some(&from) = nodes.get(rel) {
                if from == to {
                    self_loops.insert(to);
                } else if graph.find_edge(from, to).is_none() {
                    graph.add_edge(from, to, ());
                }
            }
        }
    }
    let mut sccs = tarjan_scc(&graph);
    sccs.reverse();
    let mut strata = Vec::with_capacity(sccs.len());
    for mut scc in sccs {
        scc.sort();
        let relations: Vec<String> = scc.iter().map(|&n| graph[n].clone()).collect();
        let recursive = scc.len() > 1 || self_loops.contains(&scc[0]);
        let stratum_rules = rules
            .iter()
            .filter(|r| relations.contains(&r.target))
            .cloned()
            .collect();
        strata.push(RamStratum {
            relations,
            rules: stratum_rules,
            recursive,
        });
    }
    RamProgram { strata }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schemas() -> SchemaMap {
        schema_map(&[
            Schema::new("edge", vec![ValueKind::Int, ValueKind::Int]),
            Schema::new("path", vec![ValueKind::Int, ValueKind::Int]),
            Schema::new("t3", vec![ValueKind::Int, ValueKind::Int, ValueKind::Int]),
        ])
    }

    fn fig5_rule() -> RamRule {
        RamRule::new(
            "path",
            RamExpr::permute(
                &[2, 1],
                RamExpr::join(1, RamExpr::relation("edge"), RamExpr::permute(&[1, 0], RamExpr::relation("path"))),
            ),
        )
    }

    #[test]
    fn join_of_binary_relations_has_arity_three() {
        let j = RamExpr::join(1, RamExpr::relation("path"), RamExpr::relation("edge"));
        assert_eq!(j.kinds(&schemas()).unwrap().len(), 3);
    }

    #[test]
    fn union_arity_mismatch_is_rejected() {
        let u = RamExpr::union(RamExpr::relation("edge"), RamExpr::relation("t3"));
        assert!(u.kinds(&schemas()).is_err());
        let program = RamProgram {
            strata: vec![RamStratum {
                relations: vec!["path".into()],
                rules: vec![RamRule::new("path", u)],
                recursive: false,
            }],
        };
        let errs = program.validate(&schemas()).unwrap_err();
        assert_eq!(errs[0].path, "0");
    }

    #[test]
    fn projection_of_arity_three() {
        let p = RamExpr::permute(&[2, 1], RamExpr::relation("t3"));
        assert_eq!(p.kinds(&schemas()).unwrap().len(), 2);
        let bad = RamExpr::permute(&[3], RamExpr::relation("t3"));
        assert!(bad.kinds(&schemas()).is_err());
    }

    #[test]
    fn join_width_is_checked() {
        let j = RamExpr::join(3, RamExpr::relation("edge"), RamExpr::relation("t3"));
        assert!(j.kinds(&schemas()).is_err());
    }

    #[test]
    fn transitive_closure_is_one_recursive_stratum() {
        let rules = vec![RamRule::new("path", RamExpr::relation("edge")), fig5_rule()];
        let p = stratify(rules);
        assert_eq!(p.strata.len(), 1);
        assert_eq!(p.strata[0].relations, vec!["path"]);
        assert!(p.strata[0].recursive);
        assert!(p.validate(&schemas()).is_ok());
    }

    #[test]
    fn producers_come_first() {
        let rules = vec![
            RamRule::new("a", RamExpr::relation("b")),
            RamRule::new("b", RamExpr::relation("input")),
        ];
        let p = stratify(rules);
        let order: Vec<&str> = p.strata.iter().map(|s| s.relations[0].as_str()).collect();
        assert_eq!(order, vec!["b", "a"]);
        assert!(p.strata.iter().all(|s| !s.recursive));
    }

    #[test]
    fn mutual_recursion_shares_a_stratum() {
        let rules = vec![
            RamRule::new("a", RamExpr::relation("b")),
            RamRule::new("b", RamExpr::relation("a")),
        ];
        let p = stratify(rules);
        assert_eq!(p.strata.len(), 1);
        assert_eq!(p.strata[0].relations, vec!["a", "b"]);
        assert!(p.strata[0].recursive);
    }

    #[test]
    fn sexpr_dump() {
        assert_eq!(
            fig5_rule().to_sexpr(),
            "(rule path (project (#2 #1) (join 1 (relation edge) (project (#1 #0) (relation path)))))"
        );
        let dump = stratify(vec![fig5_rule()]).dump(None);
        assert!(dump.lines().any(|l| l.trim() == "(join 1"));
        assert!(dump.lines().any(|l| l.trim() == "(relation edge)"));
    }
}
