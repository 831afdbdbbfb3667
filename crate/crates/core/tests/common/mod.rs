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


//! Reference evaluators and generators shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use vexlog::db::InputFact;
use vexlog::provenance::{InputTag, ProvenanceConfig, SemiringKind};
use vexlog::ram::{BinOp, RamExpr, ScalarExpr};
use vexlog::session::{RunOutput, Session, SessionConfig};
use vexlog::value::Value;

pub type Edge = (i64, i64);

/// One input edge with its probability and optional exclusion group.
#[derive(Debug, Clone, Copy)]
pub struct PEdge {
    pub from: i64,
    pub to: i64,
    pub prob: f64,
    pub group: Option<u32>,
}

pub fn facts(rel: &str, edges: &[PEdge]) -> Vec<InputFact> {
    edges
        .iter()
        .map(|e| {
            let mut tag = InputTag::prob(e.prob);
            tag.group = e.group;
            InputFact {
                relation: rel.into(),
                values: vec![Value::Int(e.from), Value::Int(e.to)],
                tag,
                sample: 0,
            }
        })
        .collect()
}

pub fn plain(edges: &[Edge]) -> Vec<PEdge> {
    edges
        .iter()
        .map(|&(from, to)| PEdge {
            from,
            to,
            prob: 1.0,
            group: None,
        })
        .collect()
}

pub fn config(kind: SemiringKind) -> SessionConfig {
    SessionConfig {
        provenance: ProvenanceConfig::new(kind),
        ..Default::default()
    }
}

pub fn run(src: &str, config: SessionConfig, samples: Vec<Vec<InputFact>>) -> RunOutput {
    Session::new(src, config).unwrap().run(samples).unwrap()
}

/// A parsed result row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Row {
    pub values: Vec<i64>,
    pub p: Option<f64>,
    pub proof: Option<Vec<u32>>,
    pub grad: Option<BTreeMap<u32, f64>>,
}

pub fn parse_rows(text: &str) -> Vec<Row> {
    text.lines()
        .map(|line| {
            let mut row = Row::default();
            for tok in line.split('\t') {
                if let Some(p) = tok.strip_prefix("p=") {
                    row.p = Some(p.parse().unwrap());
                } else if let Some(ids) = tok.strip_prefix("proof=[") {
                    let ids = ids.trim_end_matches(']');
                    row.proof = Some(if ids.is_empty() {
                        Vec::new()
                    } else {
                        ids.split(',').map(|x| x.parse().unwrap()).collect()
                    });
                } else if let Some(g) = tok.strip_prefix("grad={") {
                    let g = g.trim_end_matches('}');
                    let mut map = BTreeMap::new();
                    if !g.is_empty() {
                        for e in g.split(',') {
                            let (k, v) = e.split_once(':').unwrap();
                            map.insert(k.parse().unwrap(), v.parse().unwrap());
                        }
                    }
                    row.grad = Some(map);
                } else {
                    row.values.push(tok.parse().unwrap());
                }
            }
            row
        })
        .collect()
}

pub fn pairs(text: &str) -> BTreeSet<Edge> {
    parse_rows(text).into_iter().map(|r| (r.values[0], r.values[1])).collect()
}

/// Random digraph on `n` nodes; every ordered pair is an edge with
/// probability `density`.
pub fn random_digraph(rng: &mut impl Rng, n: usize, density: f64) -> Vec<Edge> {
    let mut out = Vec::new();
    for a in 0..n as i64 {
        for b in 0..n as i64 {
            if rng.gen_bool(density) {
                out.push((a, b));
            }
        }
    }
    out
}

/// Random DAG on `n` nodes with edges from lower to higher ids.
pub fn random_dag(rng: &mut impl Rng, n: usize, density: f64) -> Vec<Edge> {
    let mut out = Vec::new();
    for a in 0..n as i64 {
        for b in a + 1..n as i64 {
            if rng.gen_bool(density) {
                out.push((a, b));
            }
        }
    }
    out
}

/// Random rooted tree on `n` nodes as parent → child edges.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> Vec<Edge> {
    (1..n as i64).map(|c| (rng.gen_range(0..c), c)).collect()
}

/// `k` pairwise-distinct probabilities from the grid {0.05, 0.06, ..., 0.95}.
pub fn distinct_probs(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let mut grid: Vec<u32> = (5..=95).collect();
    grid.shuffle(rng);
    assert!(k <= grid.len());
    grid[..k].iter().map(|&g| g as f64 / 100.0).collect()
}

/// Closure by Warshall's algorithm.
pub fn reachability(n: usize, edges: &[Edge]) -> BTreeSet<Edge> {
    let mut m = vec![vec![false; n]; n];
    for &(a, b) in edges {
        m[a as usize][b as usize] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if m[i][k] {
                let via = m[k].clone();
                for (dst, &v) in m[i].iter_mut().zip(&via) {
                    *dst |= v;
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for (i, row) in m.iter().enumerate() {
        for (j, &r) in row.iter().enumerate() {
            if r {
                out.insert((i as i64, j as i64));
            }
        }
    }
    out
}

/// Same generation, one tuple at a time, to a fixpoint.
pub fn same_generation(edges: &[Edge]) -> BTreeSet<Edge> {
    let mut sg = BTreeSet::new();
    for &(p, x) in edges {
        for &(q, y) in edges {
            if p == q && x != y {
                sg.insert((x, y));
            }
        }
    }
    loop {
        let mut next = sg.clone();
        for &(a, x) in edges {
            for &(b, y) in edges {
                if sg.contains(&(a, b)) {
                    next.insert((x, y));
                }
            }
        }
        if next.len() == sg.len() {
            return sg;
        }
        sg = next;
    }
}

/// Widest path by enumerating simple paths: for every pair, the largest
/// over paths of the smallest edge probability.
pub fn widest_paths(n: usize, edges: &[PEdge]) -> BTreeMap<Edge, f64> {
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in edges {
        adj[e.from as usize].push((e.to as usize, e.prob));
    }
    let mut best: BTreeMap<Edge, f64> = BTreeMap::new();
    fn dfs(
        src: usize,
        u: usize,
        bottleneck: f64,
        adj: &[Vec<(usize, f64)>],
        on_path: &mut Vec<bool>,
        best: &mut BTreeMap<Edge, f64>,
    ) {
        for &(v, p) in &adj[u] {
            let b = bottleneck.min(p);
            let slot = best.entry((src as i64, v as i64)).or_insert(b);
            if b > *slot {
                *slot = b;
            }
            if !on_path[v] {
                on_path[v] = true;
                dfs(src, v, b, adj, on_path, best);
                on_path[v] = false;
            }
        }
    }
    for s in 0..n {
        let mut on_path = vec![false; n];
        on_path[s] = true;
        dfs(s, s, f64::INFINITY, &adj, &mut on_path, &mut best);
    }
    best
}

pub type Tuple = Vec<i64>;

/// Tuple-at-a-time evaluation of a relational expression under max-min
/// tags. A tuple's tag is the best over its derivations.
pub fn eval_expr(e: &RamExpr, db: &BTreeMap<String, BTreeMap<Tuple, f64>>) -> BTreeMap<Tuple, f64> {
    fn add(out: &mut BTreeMap<Tuple, f64>, t: Tuple, p: f64) {
        let slot = out.entry(t).or_insert(p);
        if p > *slot {
            *slot = p;
        }
    }
    let mut out = BTreeMap::new();
    match e {
        RamExpr::Relation(r) => return db.get(r).cloned().unwrap_or_default(),
        RamExpr::Project(cols, c) => {
            for (t, p) in eval_expr(c, db) {
                add(&mut out, cols.iter().map(|x| scalar(x, &t)).collect(), p);
            }
        }
        RamExpr::Select(pred, c) => {
            for (t, p) in eval_expr(c, db) {
                if scalar(pred, &t) != 0 {
                    add(&mut out, t, p);
                }
            }
        }
        RamExpr::Join(w, l, r) => {
            let (a, b) = (eval_expr(l, db), eval_expr(r, db));
            for (x, px) in &a {
                for (y, py) in &b {
                    if x[..*w] == y[..*w] {
                        let t: Tuple = x.iter().chain(&y[*w..]).copied().collect();
                        add(&mut out, t, px.min(*py));
                    }
                }
            }
        }
        RamExpr::Product(l, r) => {
            let (a, b) = (eval_expr(l, db), eval_expr(r, db));
            for (x, px) in &a {
                for (y, py) in &b {
                    add(&mut out, x.iter().chain(y).copied().collect(), px.min(*py));
                }
            }
        }
        RamExpr::Union(l, r) => {
            for (t, p) in eval_expr(l, db).into_iter().chain(eval_expr(r, db)) {
                add(&mut out, t, p);
            }
        }
        RamExpr::Intersect(l, r) => {
            let b = eval_expr(r, db);
            for (t, p) in eval_expr(l, db) {
                if let Some(q) = b.get(&t) {
                    add(&mut out, t, p.min(*q));
                }
            }
        }
    }
    out
}

fn scalar(e: &ScalarExpr, t: &[i64]) -> i64 {
    match e {
        ScalarExpr::Col(i) => t[*i],
        ScalarExpr::Const(Value::Int(v)) => *v,
        ScalarExpr::Binary(op, a, b) => {
            let (x, y) = (scalar(a, t), scalar(b, t));
            let r = match op {
                BinOp::Add => return x + y,
                BinOp::Sub => return x - y,
                BinOp::Mul => return x * y,
                BinOp::Eq => x == y,
                BinOp::Ne => x != y,
                BinOp::Lt => x < y,
                BinOp::Le => x <= y,
                BinOp::Gt => x > y,
                BinOp::Ge => x >= y,
                other => panic!("unsupported operator {other:?}"),
            };
            i64::from(r)
        }
        other => panic!("unsupported scalar {other:?}"),
    }
}

/// Naive fixpoint: every rule re-evaluated on the whole database until
/// nothing changes.
pub fn naive_fixpoint(
    rules: &[(String, RamExpr)],
    edb: BTreeMap<String, BTreeMap<Tuple, f64>>,
) -> BTreeMap<String, BTreeMap<Tuple, f64>> {
    let mut db = edb;
    loop {
        let mut changed = false;
        for (target, e) in rules {
            let derived = eval_expr(e, &db);
            let rel = db.entry(target.clone()).or_default();
            for (t, p) in derived {
                match rel.get_mut(&t) {
                    Some(q) if p > *q => {
                        *q = p;
                        changed = true;
                    }
                    Some(_) => {}
                    None => {
                        rel.insert(t, p);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return db;
        }
    }
}
