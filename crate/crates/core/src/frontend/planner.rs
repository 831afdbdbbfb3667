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


//! Rule planning.
//!
//! Body atoms are joined strictly left to right. Before each join the new
//! atom (build side) and the tuple accumulated so far (probe side) are
//! projected so the variables they share come first, in order of first
//! appearance in the accumulated tuple. Constants and repeated variables in
//! an atom become a selection on that atom; comparisons become a selection
//! as soon as all their variables are bound. A final projection builds the
//! head tuple.

use std::collections::HashMap;

use super::ast::{Atom, BodyItem, Expr, Literal, Rule, Span, SurfaceProgram};
use super::{ErrorKind, FrontendError, Warning};
use crate::db::{InputFact, Schema};
use crate::provenance::InputTag;
use crate::ram::{schema_map, stratify, BinOp, RamExpr, RamProgram, RamRule, ScalarExpr};
use crate::value::{SymbolTable, Value, ValueKind};

#[derive(Debug, Clone)]
pub struct PlannedProgram {
    /// Every relation, declared or inferred, in order of first mention.
    pub schemas: Vec<Schema>,
    pub ram: RamProgram,
    /// Facts written in the program text.
    pub facts: Vec<InputFact>,
    /// Relations reported after a run.
    pub outputs: Vec<String>,
    pub symbols: SymbolTable,
    pub warnings: Vec<Warning>,
}

impl PlannedProgram {
    pub fn schema(&self, name: &str) -> Option<&Schema> {
        self.schemas.iter().find(|s| s.name == name)
    }

    /// Relations with at least one rule.
    pub fn idb(&self) -> Vec<&str> {
        self.ram
            .strata
            .iter()
            .flat_map(|s| s.relations.iter().map(String::as_str))
            .collect()
    }
}

struct Schemas {
    order: Vec<String>,
    kinds: HashMap<String, Vec<ValueKind>>,
}

impl Schemas {
    fn get(&self, name: &str) -> Option<&Vec<ValueKind>> {
        self.kinds.get(name)
    }

    fn insert(&mut self, name: &str, kinds: Vec<ValueKind>) {
        if !self.kinds.contains_key(name) {
            self.order.push(name.to_string());
        }
        self.kinds.insert(name.to_string(), kinds);
    }
}

fn literal_kind(l: &Literal) -> ValueKind {
    match l {
        Literal::Int(_) => ValueKind::Int,
        Literal::Float(_) => ValueKind::Float,
        Literal::Str(_) => ValueKind::Symbol,
    }
}

/// Converts a literal for a column of kind `kind`; ints widen to floats.
fn literal_value(l: &Literal, kind: ValueKind, symbols: &mut SymbolTable) -> Option<Value> {
    match (l, kind) {
        (Literal::Int(i), ValueKind::Int) => Some(Value::Int(*i)),
        (Literal::Int(i), ValueKind::Float) => Some(Value::Float(*i as f64)),
        (Literal::Float(f), ValueKind::Float) => Some(Value::Float(*f)),
        (Literal::Str(s), ValueKind::Symbol) => Some(Value::Symbol(symbols.intern(s))),
        _ => None,
    }
}

fn type_error(span: Span, m: impl Into<String>) -> FrontendError {
    FrontendError::new(ErrorKind::Type, span, m)
}

fn atoms(rule: &Rule) -> impl Iterator<Item = &Atom> {
    rule.body.iter().filter_map(|b| match b {
        BodyItem::Atom(a) => Some(a),
        BodyItem::Constraint(_) => None,
    })
}

fn constraints(rule: &Rule) -> impl Iterator<Item = &Expr> {
    rule.body.iter().filter_map(|b| match b {
        BodyItem::Constraint(e) => Some(e),
        BodyItem::Atom(_) => None,
    })
}

/// Kinds of the variables bound by the rule's atoms, if all atom schemas
/// are known.
fn var_kinds(rule: &Rule, schemas: &Schemas) -> Result<Option<HashMap<String, ValueKind>>, FrontendError> {
    let mut out: HashMap<String, ValueKind> = HashMap::new();
    for atom in atoms(rule) {
        let Some(kinds) = schemas.get(&atom.relation) else {
            return Ok(None);
        };
        check_arity(atom, kinds.len())?;
        for (arg, &k) in atom.args.iter().zip(kinds) {
            if let Expr::Var(v, span) = arg {
                match out.get(v) {
                    Some(&prev) if prev != k => {
                        return Err(type_error(
                            *span,
                            format!("variable `{v}` is used both as {prev} and as {k}"),
                        ))
                    }
                    _ => {
                        out.insert(v.clone(), k);
                    }
                }
            }
        }
    }
    Ok(Some(out))
}

fn check_arity(atom: &Atom, arity: usize) -> Result<(), FrontendError> {
    if atom.args.len() != arity {
        return Err(type_error(
            atom.span,
            format!(
                "`{}` has {} columns but is used with {} arguments",
                atom.relation,
                arity,
                atom.args.len()
            ),
        ));
    }
    Ok(())
}

fn to_scalar(
    e: &Expr,
    index: &HashMap<&str, usize>,
    symbols: &mut SymbolTable,
) -> Result<ScalarExpr, FrontendError> {
    Ok(match e {
        Expr::Var(v, span) => match index.get(v.as_str()) {
            Some(&i) => ScalarExpr::Col(i),
            None => {
                return Err(FrontendError::new(
                    ErrorKind::RangeRestriction,
                    *span,
                    format!("`{v}` does not appear in a body atom"),
                ))
            }
        },
        Expr::Wildcard(span) => {
            return Err(FrontendError::new(ErrorKind::Syntax, *span, "`_` is only allowed in body atoms"))
        }
        Expr::Lit(l, _) => ScalarExpr::Const(literal_value(l, literal_kind(l), symbols).expect("own kind")),
        Expr::Unary(op, a, _) => ScalarExpr::Unary(*op, Box::new(to_scalar(a, index, symbols)?)),
        Expr::Binary(op, a, b, _) => ScalarExpr::bin(*op, to_scalar(a, index, symbols)?, to_scalar(b, index, symbols)?),
    })
}

fn head_kinds(
    rule: &Rule,
    vars: &HashMap<String, ValueKind>,
    symbols: &mut SymbolTable,
) -> Result<Vec<ValueKind>, FrontendError> {
    let names: Vec<&str> = vars.keys().map(String::as_str).collect();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let kinds: Vec<ValueKind> = names.iter().map(|n| vars[*n]).collect();
    rule.head
        .args
        .iter()
        .map(|a| {
            let s = to_scalar(a, &index, symbols)?;
            s.kind(&kinds).map_err(|m| type_error(a.span(), m))
        })
        .collect()
}

/// Plans every rule of `prog` and stratifies the result.
pub fn plan(prog: &SurfaceProgram) -> Result<PlannedProgram, FrontendError> {
    let mut symbols = SymbolTable::new();
    let mut warnings = Vec::new();
    let mut schemas = Schemas {
        order: Vec::new(),
        kinds: HashMap::new(),
    };
    for decl in &prog.types {
        match schemas.get(&decl.name) {
            Some(k) if *k != decl.kinds => {
                return Err(type_error(decl.span, format!("conflicting declarations of `{}`", decl.name)))
            }
            _ => schemas.insert(&decl.name, decl.kinds.clone()),
        }
    }
    for fact in &prog.facts {
        if schemas.get(&fact.relation).is_none() {
            schemas.insert(&fact.relation, fact.values.iter().map(literal_kind).collect());
        }
    }

    let mut idb: Vec<String> = Vec::new();
    for rule in &prog.rules {
        if !idb.contains(&rule.head.relation) {
            idb.push(rule.head.relation.clone());
        }
    }
    for rule in &prog.rules {
        for atom in atoms(rule) {
            if schemas.get(&atom.relation).is_none() && !idb.contains(&atom.relation) {
                return Err(FrontendError::new(
                    ErrorKind::UnknownRelation,
                    atom.span,
                    format!("`{}` is neither declared nor defined by a rule", atom.relation),
                ));
            }
        }
        check_range_restriction(rule)?;
    }
    for (q, span) in &prog.queries {
        if schemas.get(q).is_none() && !idb.contains(q) {
            return Err(FrontendError::new(
                ErrorKind::UnknownRelation,
                *span,
                format!("query of unknown relation `{q}`"),
            ));
        }
    }

    // Infer undeclared relation types from rule bodies until nothing changes.
    loop {
        let mut progress = false;
        for rule in &prog.rules {
            if schemas.get(&rule.head.relation).is_some() {
                continue;
            }
            if let Some(vars) = var_kinds(rule, &schemas)? {
                let kinds = head_kinds(rule, &vars, &mut symbols)?;
                schemas.insert(&rule.head.relation, kinds);
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }
    if let Some(rule) = prog.rules.iter().find(|r| schemas.get(&r.head.relation).is_none()) {
        return Err(type_error(
            rule.head.span,
            format!(
                "cannot infer the column types of `{}`; declare it with `type`",
                rule.head.relation
            ),
        ));
    }

    let mut rules = Vec::with_capacity(prog.rules.len());
    for rule in &prog.rules {
        let vars = var_kinds(rule, &schemas)?.expect("all schemas known");
        let target = &schemas.kinds[&rule.head.relation];
        check_arity(&rule.head, target.len())?;
        let got = head_kinds(rule, &vars, &mut symbols)?;
        for (i, (g, t)) in got.iter().zip(target).enumerate() {
            if g != t {
                return Err(type_error(
                    rule.head.args[i].span(),
                    format!("column {i} of `{}` is {t}, but the rule yields {g}", rule.head.relation),
                ));
            }
        }
        rules.push(plan_rule(rule, &schemas, &mut symbols, &mut warnings)?);
    }

    let mut facts = Vec::with_capacity(prog.facts.len());
    for f in &prog.facts {
        let kinds = &schemas.kinds[&f.relation];
        if kinds.len() != f.values.len() {
            return Err(type_error(
                f.span,
                format!("`{}` has {} columns, fact has {}", f.relation, kinds.len(), f.values.len()),
            ));
        }
        let mut values = Vec::with_capacity(kinds.len());
        for (l, &k) in f.values.iter().zip(kinds) {
            values.push(
                literal_value(l, k, &mut symbols)
                    .ok_or_else(|| type_error(f.span, format!("constant does not fit a {k} column")))?,
            );
        }
        facts.push(InputFact {
            relation: f.relation.clone(),
            values,
            tag: InputTag {
                prob: f.prob,
                group: None,
            },
            sample: 0,
        });
    }

    let schema_list: Vec<Schema> = schemas
        .order
        .iter()
        .map(|n| Schema::new(n.clone(), schemas.kinds[n].clone()))
        .collect();
    let ram = stratify(rules);
    if let Err(errs) = ram.validate(&schema_map(&schema_list)) {
        let e = &errs[0];
        return Err(type_error(Span::default(), e.to_string()));
    }
    let outputs = if prog.queries.is_empty() {
        idb
    } else {
        let mut q: Vec<String> = Vec::new();
        for (name, _) in &prog.queries {
            if !q.contains(name) {
                q.push(name.clone());
            }
        }
        q
    };
    Ok(PlannedProgram {
        schemas: schema_list,
        ram,
        facts,
        outputs,
        symbols,
        warnings,
    })
}

fn check_range_restriction(rule: &Rule) -> Result<(), FrontendError> {
    let mut bound: Vec<(String, Span)> = Vec::new();
    for atom in atoms(rule) {
        for a in &atom.args {
            a.vars(&mut bound);
        }
    }
    if atoms(rule).next().is_none() {
        return Err(FrontendError::new(
            ErrorKind::RangeRestriction,
            rule.span,
            "rule body has no atom",
        ));
    }
    let mut used = Vec::new();
    for a in &rule.head.args {
        a.vars(&mut used);
    }
    for c in constraints(rule) {
        c.vars(&mut used);
    }
    for (v, span) in used {
        if !bound.iter().any(|(b, _)| *b == v) {
            return Err(FrontendError::new(
                ErrorKind::RangeRestriction,
                span,
                format!("`{v}` does not appear in a body atom"),
            ));
        }
    }
    Ok(())
}

fn and_all(mut conds: Vec<ScalarExpr>) -> Option<ScalarExpr> {
    let first = if conds.is_empty() { return None } else { conds.remove(0) };
    Some(conds.into_iter().fold(first, |acc, c| ScalarExpr::bin(BinOp::And, acc, c)))
}

/// Reorders the columns of `expr` (currently holding `have`) to `want`.
fn arrange(expr: RamExpr, have: &[String], want: &[String]) -> RamExpr {
    if have == want {
        return expr;
    }
    let cols: Vec<usize> = want
        .iter()
        .map(|v| have.iter().position(|h| h == v).expect("variable present"))
        .collect();
    RamExpr::permute(&cols, expr)
}

/// A single atom: selection for constants and repeated variables, then a
/// projection onto its distinct variables.
fn plan_atom(
    atom: &Atom,
    schemas: &Schemas,
    symbols: &mut SymbolTable,
    warnings: &mut Vec<Warning>,
) -> (RamExpr, Vec<String>) {
    let kinds = &schemas.kinds[&atom.relation];
    let mut vars: Vec<String> = Vec::new();
    let mut positions: Vec<usize> = Vec::new();
    let mut conds = Vec::new();
    let mut unsatisfiable = false;
    for (i, arg) in atom.args.iter().enumerate() {
        match arg {
            Expr::Var(v, _) => match vars.iter().position(|x| x == v) {
                Some(j) => conds.push(ScalarExpr::bin(
                    BinOp::Eq,
                    ScalarExpr::Col(positions[j]),
                    ScalarExpr::Col(i),
                )),
                None => {
                    vars.push(v.clone());
                    positions.push(i);
                }
            },
            Expr::Lit(l, span) => match literal_value(l, kinds[i], symbols) {
                Some(v) => conds.push(ScalarExpr::bin(BinOp::Eq, ScalarExpr::Col(i), ScalarExpr::Const(v))),
                None => {
                    unsatisfiable = true;
                    warnings.push(Warning {
                        span: *span,
                        message: format!(
                            "constant can never match column {i} of `{}` ({}); the atom is empty",
                            atom.relation, kinds[i]
                        ),
                    });
                }
            },
            _ => {}
        }
    }
    let mut expr = RamExpr::relation(atom.relation.clone());
    if unsatisfiable {
        expr = RamExpr::select(ScalarExpr::truth(false), expr);
    } else if let Some(c) = and_all(conds) {
        expr = RamExpr::select(c, expr);
    }
    let identity = positions.len() == kinds.len() && positions.iter().enumerate().all(|(i, &p)| i == p);
    if !identity {
        expr = RamExpr::permute(&positions, expr);
    }
    (expr, vars)
}

fn plan_rule(
    rule: &Rule,
    schemas: &Schemas,
    symbols: &mut SymbolTable,
    warnings: &mut Vec<Warning>,
) -> Result<RamRule, FrontendError> {
    let mut pending: Vec<&Expr> = constraints(rule).collect();
    let mut acc: Vec<String> = Vec::new();
    let mut expr: Option<RamExpr> = None;
    for atom in atoms(rule) {
        let (aexpr, avars) = plan_atom(atom, schemas, symbols, warnings);
        expr = Some(match expr.take() {
            None => {
                acc = avars;
                aexpr
            }
            Some(prev) => {
                let shared: Vec<String> = acc.iter().filter(|v| avars.contains(v)).cloned().collect();
                let left_order: Vec<String> = shared
                    .iter()
                    .chain(avars.iter().filter(|v| !shared.contains(v)))
                    .cloned()
                    .collect();
                let right_order: Vec<String> = shared
                    .iter()
                    .chain(acc.iter().filter(|v| !shared.contains(v)))
                    .cloned()
                    .collect();
                let left = arrange(aexpr, &avars, &left_order);
                let right = arrange(prev, &acc, &right_order);
                let joined = if shared.is_empty() {
                    RamExpr::product(left, right)
                } else {
                    RamExpr::join(shared.len(), left, right)
                };
                acc = left_order
                    .into_iter()
                    .chain(right_order.into_iter().skip(shared.len()))
                    .collect();
                joined
            }
        });
        let index: HashMap<&str, usize> = acc.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        let mut still = Vec::new();
        for c in pending {
            let mut vs = Vec::new();
            c.vars(&mut vs);
            if vs.iter().all(|(v, _)| index.contains_key(v.as_str())) {
                let pred = to_scalar(c, &index, symbols)?;
                let kinds: Vec<ValueKind> = acc_kinds(rule, schemas, &acc);
                pred.kind(&kinds).map_err(|m| type_error(c.span(), m))?;
                expr = Some(RamExpr::select(pred, expr.take().expect("expr")));
            } else {
                still.push(c);
            }
        }
        pending = still;
    }
    let index: HashMap<&str, usize> = acc.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    let head: Vec<ScalarExpr> = rule
        .head
        .args
        .iter()
        .map(|a| to_scalar(a, &index, symbols))
        .collect::<Result<_, _>>()?;
    let body = expr.expect("range restriction guarantees an atom");
    Ok(RamRule::new(rule.head.relation.clone(), RamExpr::project(head, body)))
}

fn acc_kinds(rule: &Rule, schemas: &Schemas, acc: &[String]) -> Vec<ValueKind> {
    let vars = var_kinds(rule, schemas).ok().flatten().unwrap_or_default();
    acc.iter().map(|v| vars[v]).collect()
}

#[cfg(test)]
mod tests {
    use super::super::{compile_source, parse};
    use super::*;

    const FIG3C: &str = "type Cell = u32
type edge(x: Cell, y: Cell)
type is_endpoint(x: Cell)

rel path(x, y) :-
  edge(x,y) or (path(x, z) and edge(z, y)).
rel endpoints_connected() :- is_endpoint(x),
  is_endpoint(y), path(x, y), x != y.
";

    fn rule_sexprs(p: &PlannedProgram) -> Vec<String> {
        p.ram.rules().map(|r| r.to_sexpr()).collect()
    }

    #[test]
    fn path_rule_matches_the_compiled_tree() {
        let p = compile_source("type edge(u32, u32)\ntype path(u32, u32)\nrel path(x,y) = path(x,z) and edge(z,y)").unwrap();
        assert_eq!(
            rule_sexprs(&p),
            vec!["(rule path (project (#2 #1) (join 1 (relation edge) (project (#1 #0) (relation path)))))"]
        );
    }

    #[test]
    fn reachability_program_plans() {
        let p = compile_source(FIG3C).unwrap();
        assert_eq!(p.schemas.len(), 4);
        assert_eq!(p.schema("endpoints_connected").unwrap().arity(), 0);
        assert_eq!(p.ram.strata.len(), 2);
        assert_eq!(p.ram.strata[0].relations, vec!["path"]);
        let s = rule_sexprs(&p);
        assert_eq!(s[0], "(rule path (project (#0 #1) (relation edge)))");
        assert!(s[2].contains("(select (!= "));
        assert_eq!(p.outputs, vec!["path", "endpoints_connected"]);
    }

    #[test]
    fn single_atom_is_an_identity_projection() {
        let p = compile_source("type e(i32, i32)\nrel p(x, y) :- e(x, y)").unwrap();
        assert_eq!(rule_sexprs(&p), vec!["(rule p (project (#0 #1) (relation e)))"]);
    }

    #[test]
    fn disconnected_atoms_become_a_product() {
        let p = compile_source("type a(i32)\ntype b(i32)\nrel q() :- a(x), b(y)").unwrap();
        assert_eq!(rule_sexprs(&p), vec!["(rule q (project () (product (relation b) (relation a))))"]);
    }

    #[test]
    fn constants_and_repeats_become_selections() {
        let p = compile_source("type e(i32, i32, i32)\nrel p(x) :- e(x, 3, x)").unwrap();
        assert_eq!(
            rule_sexprs(&p),
            vec!["(rule p (project (#0) (project (#0) (select (and (== #1 3) (== #0 #2)) (relation e)))))"]
        );
    }

    #[test]
    fn range_restriction() {
        let e = compile_source("type s(i32)\nrel r(x) :- s(y).").unwrap_err();
        assert_eq!(e.kind, ErrorKind::RangeRestriction);
        assert_eq!((e.span.line, e.span.col), (2, 7));
    }

    #[test]
    fn unknown_relations_are_reported() {
        let e = compile_source("rel r(x) :- nope(x).").unwrap_err();
        assert_eq!(e.kind, ErrorKind::UnknownRelation);
        assert_eq!((e.span.line, e.span.col), (1, 13));
    }

    #[test]
    fn unsatisfiable_constant_warns_and_plans_an_empty_atom() {
        let p = compile_source("type e(i32, String)\nrel p(x) :- e(x, 3)").unwrap();
        assert_eq!(p.warnings.len(), 1);
        assert!(rule_sexprs(&p)[0].contains("(select 0 (relation e))"));
    }

    #[test]
    fn idb_types_are_inferred_through_recursion() {
        let p = compile_source(
            "type edge(String, String)\nrel sg(x, y) :- edge(p, x), edge(p, y), x != y.\nrel sg(x, y) :- edge(a, x), sg(a, b), edge(b, y).",
        )
        .unwrap();
        assert_eq!(p.schema("sg").unwrap().kinds, vec![ValueKind::Symbol, ValueKind::Symbol]);
        assert!(p.ram.strata[0].recursive);
    }

    #[test]
    fn inline_facts_and_queries() {
        let p = compile_source("rel e = {0.5::(1, \"a\"), (2, \"b\")}\nrel r(x) :- e(x, _)\nquery r").unwrap();
        assert_eq!(p.facts.len(), 2);
        assert_eq!(p.facts[0].values[1], Value::Symbol(0));
        assert_eq!(p.facts[0].tag.prob, Some(0.5));
        assert_eq!(p.outputs, vec!["r"]);
    }

    #[test]
    fn head_arithmetic_is_typed() {
        let p = compile_source("type e(i32, f64)\nrel r(x + 1, y * 2.0) :- e(x, y)").unwrap();
        assert_eq!(p.schema("r").unwrap().kinds, vec![ValueKind::Int, ValueKind::Float]);
        let e = compile_source("type e(String)\nrel r(x + 1) :- e(x)").unwrap_err();
        assert_eq!(e.kind, ErrorKind::Type);
    }

    #[test]
    fn empty_program_plans_to_nothing() {
        let p = plan(&parse("").unwrap()).unwrap();
        assert!(p.ram.strata.is_empty() && p.schemas.is_empty());
    }
}
