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


//! Acceptance criteria. Prints one PASS/FAIL line per criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vexlog::compiler::{compile_program, CompileOptions};
use vexlog::db::{Database, InputFact, Schema};
use vexlog::provenance::{InputTag, MaxMinProb, Provenance, ProvenanceConfig, SemiringKind, UnitProvenance};
use vexlog::ram::{stratify, BinOp, RamExpr, RamRule, ScalarExpr};
use vexlog::runtime::{execute, ExecConfig};
use vexlog::session::{Session, SessionConfig, SG_PROGRAM, TC_PROGRAM};
use vexlog::value::{Value, ValueKind};

type Outcome = Result<String, String>;
type Rules = Vec<(String, RamExpr)>;
type Input = Vec<(String, Tuple, f64)>;
type Criterion = (&'static str, fn() -> Outcome);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn tc(kind: SemiringKind, edges: &[PEdge]) -> Vec<Row> {
    let out = run(TC_PROGRAM, config(kind), vec![facts("edge", edges)]);
    parse_rows(&out.samples[0].relations["path"])
}

fn closure_matches_reachability() -> Outcome {
    let mut r = rng(1);
    let t0 = Instant::now();
    for g in 0..200 {
        let n = r.gen_range(1..=50);
        let edges = random_digraph(&mut r, n, 0.1);
        let got: BTreeSet<Edge> = tc(SemiringKind::Unit, &plain(&edges))
            .into_iter()
            .map(|row| (row.values[0], row.values[1]))
            .collect();
        let want = reachability(n, &edges);
        if got != want {
            return Err(format!("graph {g} ({n} nodes): {} tuples, oracle {}", got.len(), want.len()));
        }
    }
    Ok(format!("200 graphs in {:.2}s", t0.elapsed().as_secs_f64()))
}

fn same_generation_matches_naive() -> Outcome {
    let mut r = rng(2);
    let mut total = 0;
    for g in 0..50 {
        let n = r.gen_range(1..=30);
        let edges = if g % 2 == 0 {
            random_tree(&mut r, n)
        } else {
            random_dag(&mut r, n, 0.15)
        };
        let out = run(SG_PROGRAM, config(SemiringKind::Unit), vec![facts("edge", &plain(&edges))]);
        let got = pairs(&out.samples[0].relations["sg"]);
        let want = same_generation(&edges);
        if got != want {
            return Err(format!("graph {g}: {} tuples, oracle {}", got.len(), want.len()));
        }
        total += got.len();
    }
    Ok(format!("50 graphs, {total} tuples"))
}

fn with_probs(r: &mut impl Rng, edges: &[Edge]) -> Vec<PEdge> {
    let probs = distinct_probs(r, edges.len());
    edges
        .iter()
        .zip(probs)
        .map(|(&(from, to), prob)| PEdge {
            from,
            to,
            prob,
            group: None,
        })
        .collect()
}

fn max_min_matches_widest_paths() -> Outcome {
    let mut r = rng(3);
    let mut checked = 0;
    for g in 0..100 {
        let n = r.gen_range(1..=10);
        let mut edges = random_digraph(&mut r, n, 0.3);
        edges.truncate(91);
        let edges = with_probs(&mut r, &edges);
        let want = widest_paths(n, &edges);
        let got: BTreeMap<Edge, f64> = tc(SemiringKind::MaxMinProb, &edges)
            .into_iter()
            .map(|row| ((row.values[0], row.values[1]), row.p.unwrap()))
            .collect();
        if got.len() != want.len() {
            return Err(format!("graph {g}: {} tuples, oracle {}", got.len(), want.len()));
        }
        for (k, p) in &want {
            if got.get(k) != Some(p) {
                return Err(format!("graph {g}: {k:?} tagged {:?}, oracle {p}", got.get(k)));
            }
        }
        checked += want.len();
    }
    Ok(format!("{checked} tags equal"))
}

const H: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-3;

fn probabilities(kind: SemiringKind, edges: &[PEdge]) -> BTreeMap<Edge, Row> {
    tc(kind, edges)
        .into_iter()
        .map(|row| ((row.values[0], row.values[1]), row))
        .collect()
}

fn gradients_match_finite_differences() -> Outcome {
    let mut r = rng(4);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for g in 0..50 {
        let n = r.gen_range(2..=8);
        let dag = random_dag(&mut r, n, 0.5);
        let edges = with_probs(&mut r, &dag);
        for kind in [SemiringKind::DiffAddMultProb, SemiringKind::DiffMaxMinProb] {
            let base = probabilities(kind, &edges);
            for i in 0..edges.len() {
                let mut up = edges.clone();
                up[i].prob += H;
                let mut down = edges.clone();
                down[i].prob -= H;
                let (pu, pd) = (probabilities(kind, &up), probabilities(kind, &down));
                for (k, row) in &base {
                    let at = |m: &BTreeMap<Edge, Row>| m.get(k).and_then(|r| r.p).unwrap_or(0.0);
                    let fd = (at(&pu) - at(&pd)) / (2.0 * H);
                    let an = row.grad.as_ref().unwrap().get(&(i as u32)).copied().unwrap_or(0.0);
                    let err = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                    worst = worst.max(err);
                    if err > GRAD_TOL {
                        return Err(format!("{kind} graph {g}: d{k:?}/d{i} = {an}, finite difference {fd}"));
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} partials, worst relative error {worst:.2e}"))
}

fn proofs_are_valid() -> Outcome {
    let mut r = rng(5);
    let mut checked = 0;
    for g in 0..50 {
        let n = r.gen_range(2..=8);
        let dag = random_dag(&mut r, n, 0.5);
        let mut edges = with_probs(&mut r, &dag);
        // Out-edges of some nodes are mutually exclusive.
        for e in &mut edges {
            if e.from % 3 == 0 {
                e.group = Some(e.from as u32);
            }
        }
        for row in tc(SemiringKind::DiffTop1Proofs, &edges) {
            let proof = row.proof.clone().unwrap();
            let members: Vec<&PEdge> = proof.iter().map(|&i| &edges[i as usize]).collect();
            let groups: Vec<u32> = members.iter().filter_map(|e| e.group).collect();
            let distinct: BTreeSet<(i64, i64)> = members.iter().map(|e| (e.from, e.to)).collect();
            let grouped: BTreeSet<u32> = groups.iter().copied().collect();
            if grouped.len() != groups.len() || distinct.len() != members.len() {
                return Err(format!("graph {g}: proof {proof:?} of {:?} has a conflict", row.values));
            }
            let sub: Vec<Edge> = members.iter().map(|e| (e.from, e.to)).collect();
            let derived = pairs(
                &run(TC_PROGRAM, config(SemiringKind::Unit), vec![facts("edge", &plain(&sub))]).samples[0].relations
                    ["path"],
            );
            if !derived.contains(&(row.values[0], row.values[1])) {
                return Err(format!("graph {g}: proof {proof:?} does not derive {:?}", row.values));
            }
            let product: f64 = members.iter().map(|e| e.prob).product();
            if (product - row.p.unwrap()).abs() > 1e-12 {
                return Err(format!("graph {g}: proof probability {} vs product {product}", row.p.unwrap()));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} proofs"))
}

const EDB: [&str; 2] = ["e0", "e1"];
const IDB: [&str; 2] = ["r0", "r1"];

fn random_leaf(r: &mut impl Rng) -> RamExpr {
    let all = [EDB[0], EDB[1], IDB[0], IDB[1]];
    RamExpr::relation(all[r.gen_range(0..all.len())])
}

fn random_pair(r: &mut impl Rng, arity: usize) -> Vec<ScalarExpr> {
    vec![ScalarExpr::Col(r.gen_range(0..arity)), ScalarExpr::Col(r.gen_range(0..arity))]
}

/// A random binary-relation expression.
fn random_body(r: &mut impl Rng) -> RamExpr {
    let swap = |e: RamExpr| RamExpr::project(vec![ScalarExpr::Col(1), ScalarExpr::Col(0)], e);
    match r.gen_range(0..7) {
        0 => RamExpr::project(random_pair(r, 2), random_leaf(r)),
        1 => {
            let l = if r.gen_bool(0.5) { swap(random_leaf(r)) } else { random_leaf(r) };
            RamExpr::project(random_pair(r, 3), RamExpr::join(1, l, random_leaf(r)))
        }
        2 => {
            let op = [BinOp::Ne, BinOp::Lt, BinOp::Le, BinOp::Eq][r.gen_range(0..4)];
            let pred = ScalarExpr::bin(op, ScalarExpr::Col(0), ScalarExpr::Col(1));
            RamExpr::select(pred, random_leaf(r))
        }
        3 => RamExpr::union(random_leaf(r), swap(random_leaf(r))),
        4 => RamExpr::project(random_pair(r, 4), RamExpr::product(random_leaf(r), random_leaf(r))),
        5 => RamExpr::intersect(random_leaf(r), random_leaf(r)),
        _ => RamExpr::join(2, random_leaf(r), swap(random_leaf(r))),
    }
}

fn engine_run<P: Provenance>(
    prov: &P,
    rules: &[(String, RamExpr)],
    input: &[(String, Tuple, f64)],
    opts: &CompileOptions,
    exec: &ExecConfig,
) -> BTreeMap<String, BTreeMap<Tuple, P::Tag>> {
    let schemas: Vec<Schema> = EDB
        .iter()
        .chain(&IDB)
        .map(|n| Schema::new(*n, vec![ValueKind::Int; 2]))
        .collect();
    let ram = stratify(rules.iter().map(|(t, e)| RamRule::new(t.clone(), e.clone())).collect());
    let code = compile_program(&ram, &schemas, opts).unwrap();
    let facts: Vec<InputFact> = input
        .iter()
        .map(|(rel, t, p)| InputFact {
            relation: rel.clone(),
            values: t.iter().map(|&v| Value::Int(v)).collect(),
            tag: if prov.kind() == SemiringKind::Unit {
                InputTag::default()
            } else {
                InputTag::prob(*p)
            },
            sample: 0,
        })
        .collect();
    let mut db = Database::load_edb(prov, &schemas, Default::default(), facts, false).unwrap();
    execute(prov, &code, &mut db, exec).unwrap();
    IDB.iter()
        .map(|rel| {
            let rows = db
                .dump_relation(rel)
                .unwrap()
                .into_iter()
                .map(|row| {
                    let t = row
                        .values
                        .iter()
                        .map(|v| match v {
                            Value::Int(i) => *i,
                            _ => unreachable!(),
                        })
                        .collect();
                    (t, row.tag)
                })
                .collect();
            (rel.to_string(), rows)
        })
        .collect()
}

fn random_program(r: &mut impl Rng) -> (Rules, Input) {
    let rules: Vec<(String, RamExpr)> = (0..r.gen_range(1..=3))
        .map(|_| (IDB[r.gen_range(0..2)].to_string(), random_body(r)))
        .collect();
    let n = r.gen_range(0..=100);
    let probs = distinct_probs(r, 91);
    let mut seen = BTreeSet::new();
    let mut input = Vec::new();
    for _ in 0..n {
        let rel = EDB[r.gen_range(0..2)].to_string();
        let t = vec![r.gen_range(0..8), r.gen_range(0..8)];
        if seen.insert((rel.clone(), t.clone())) {
            let p = probs[input.len() % probs.len()];
            input.push((rel, t, p));
        }
    }
    (rules, input)
}

fn semi_naive_matches_naive() -> Outcome {
    let mut r = rng(6);
    let unit = UnitProvenance::new(ProvenanceConfig::new(SemiringKind::Unit));
    let maxmin = MaxMinProb::new(ProvenanceConfig::new(SemiringKind::MaxMinProb));
    let mut tuples = 0;
    for g in 0..100 {
        let (rules, input) = random_program(&mut r);
        let mut edb: BTreeMap<String, BTreeMap<Tuple, f64>> = BTreeMap::new();
        for (rel, t, p) in &input {
            edb.entry(rel.clone()).or_default().insert(t.clone(), *p);
        }
        let want = naive_fixpoint(&rules, edb);
        let opts = CompileOptions::default();
        let exec = ExecConfig::default();
        let got_unit = engine_run(&unit, &rules, &input, &opts, &exec);
        let got_mm = engine_run(&maxmin, &rules, &input, &opts, &exec);
        for rel in IDB {
            let w = want.get(rel).cloned().unwrap_or_default();
            let keys: BTreeSet<&Tuple> = w.keys().collect();
            if got_unit[rel].keys().collect::<BTreeSet<_>>() != keys {
                return Err(format!("program {g}, {rel}: tuple sets differ under unit; rules {rules:?}"));
            }
            if got_mm[rel] != w {
                return Err(format!("program {g}, {rel}: max-min tags differ; rules {rules:?}"));
            }
            tuples += w.len();
        }
    }
    Ok(format!("100 programs, {tuples} tuples"))
}

fn random_samples(r: &mut impl Rng, k: usize) -> Vec<Vec<InputFact>> {
    (0..k)
        .map(|_| {
            let n = r.gen_range(1..=12);
            let g = random_digraph(r, n, 0.2);
            let mut edges = with_probs(r, &g);
            for e in &mut edges {
                if r.gen_bool(0.3) {
                    e.group = Some(r.gen_range(0..3));
                }
            }
            facts("edge", &edges)
        })
        .collect()
}

fn batching_is_transparent() -> Outcome {
    let mut r = rng(7);
    let mut compared = 0;
    for round in 0..5 {
        let samples = random_samples(&mut r, 8);
        for kind in SemiringKind::ALL {
            for src in [TC_PROGRAM, SG_PROGRAM] {
                let mut one = config(kind);
                one.batch = 1;
                let mut eight = config(kind);
                eight.batch = 8;
                let a = run(src, one, samples.clone());
                let b = run(src, eight, samples.clone());
                if b.stats.runs.len() != 1 {
                    return Err("batch of 8 did not run as one batch".into());
                }
                for (s, (x, y)) in a.samples.iter().zip(&b.samples).enumerate() {
                    if x != y {
                        return Err(format!("round {round}, {kind}, sample {s}: dumps differ"));
                    }
                    compared += 1;
                }
            }
        }
    }
    Ok(format!("{compared} per-sample dumps byte-identical"))
}

/// Every combination of the four toggles.
fn toggles() -> Vec<(String, SessionConfig)> {
    let mut out = Vec::new();
    for bits in 0..16u8 {
        let mut c = SessionConfig::default();
        c.exec.arena = bits & 1 == 0;
        c.exec.reuse = bits & 2 == 0;
        c.compile.static_regs = bits & 4 == 0;
        c.compile.diff_delta = bits & 8 != 0;
        let name = format!(
            "arena={} reuse={} static={} diff-delta={}",
            c.exec.arena, c.exec.reuse, c.compile.static_regs, c.compile.diff_delta
        );
        out.push((name, c));
    }
    out
}

/// Random graph with `edges` edges over `2 * edges` nodes.
fn sparse_graph(r: &mut impl Rng, edges: usize) -> Vec<Edge> {
    let n = 2 * edges as i64;
    let mut set = BTreeSet::new();
    while set.len() < edges {
        set.insert((r.gen_range(0..n), r.gen_range(0..n)));
    }
    set.into_iter().collect()
}

fn optimizations_are_transparent() -> Outcome {
    let mut r = rng(8);
    let mut corpus: Vec<(&str, Vec<Vec<InputFact>>)> = Vec::new();
    for _ in 0..3 {
        corpus.push((TC_PROGRAM, random_samples(&mut r, 1)));
        corpus.push((SG_PROGRAM, random_samples(&mut r, 1)));
    }
    let combos = toggles();
    let mut runs = 0;
    for (i, (src, samples)) in corpus.iter().enumerate() {
        for kind in [SemiringKind::Unit, SemiringKind::DiffAddMultProb, SemiringKind::DiffTop1Proofs] {
            let mut reference = None;
            for (name, c) in &combos {
                let mut c = c.clone();
                c.provenance = ProvenanceConfig::new(kind);
                let out = run(src, c, samples.clone()).samples;
                match &reference {
                    None => reference = Some(out),
                    Some(want) if *want != out => {
                        return Err(format!("corpus item {i}, {kind}: results differ with {name}"));
                    }
                    Some(_) => {}
                }
                runs += 1;
            }
        }
    }
    // Steady-state allocation on the closure benchmark.
    let edges = sparse_graph(&mut r, 20_000);
    let out = run(TC_PROGRAM, config(SemiringKind::Unit), vec![facts("edge", &plain(&edges))]);
    let stats = &out.stats.runs[0];
    let late: Vec<(usize, u64)> = stats
        .per_iteration
        .iter()
        .filter(|s| s.iteration >= 3)
        .map(|s| (s.iteration, s.fresh_allocations))
        .collect();
    let bad: Vec<&(usize, u64)> = late.iter().filter(|(_, n)| *n > 0).collect();
    if !bad.is_empty() {
        return Err(format!(
            "{runs} runs identical, but fresh allocations at iterations >= 3: {bad:?} (of {} iterations)",
            stats.iterations
        ));
    }
    Ok(format!(
        "{runs} runs identical; 0 fresh allocations over iterations 3..={}",
        stats.iterations
    ))
}

fn golden_join_block() -> Outcome {
    let src = "type edge(u32, u32)\ntype path(u32, u32)\nrel path(x,y) = path(x,z) and edge(z,y)";
    let session = Session::new(src, SessionConfig::default()).map_err(|e| e.to_string())?;
    let code = session.compile(false).map_err(|e| e.to_string())?;
    let step = code[0].step.as_ref().ok_or("no step program")?;
    let kinds: Vec<String> = step.instrs[..step.epilogue]
        .iter()
        .map(|i| match i {
            vexlog::apm::Instr::GatherReduce { .. } => "gather<otimes>".to_string(),
            other => other.name().to_string(),
        })
        .collect();
    let want = [
        "alloc", "eval", "copy", "alloc", "build", "alloc", "count", "scan", "alloc", "join", "gather", "gather",
        "gather<otimes>",
    ];
    let found = kinds.windows(want.len()).any(|w| w == want);
    if found {
        Ok(want.join(","))
    } else {
        Err(format!("instruction kinds {kinds:?}"))
    }
}

fn parallel_speedup() -> Outcome {
    let mut r = rng(10);
    let edges = sparse_graph(&mut r, 100_000);
    let input = vec![facts("edge", &plain(&edges))];
    let timed = |threads: usize| {
        let mut c = config(SemiringKind::Unit);
        c.exec.threads = threads;
        let t0 = Instant::now();
        let out = run(TC_PROGRAM, c, input.clone());
        (t0.elapsed().as_secs_f64(), out.samples)
    };
    let (t1, a) = timed(1);
    let (t8, b) = timed(8);
    let rows = a[0].relations["path"].lines().count();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let detail = format!("{rows} tuples; 1 thread {t1:.2}s, 8 threads {t8:.2}s, speedup {:.2}x on {cores} cpus", t1 / t8);
    if a != b {
        return Err(format!("dumps differ; {detail}"));
    }
    if t1 / t8 >= 2.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 closure vs reachability", closure_matches_reachability),
        ("2 same generation vs naive", same_generation_matches_naive),
        ("3 max-min vs widest path", max_min_matches_widest_paths),
        ("4 gradients vs finite differences", gradients_match_finite_differences),
        ("5 top-1 proofs valid", proofs_are_valid),
        ("6 semi-naive vs naive", semi_naive_matches_naive),
        ("7 batching transparent", batching_is_transparent),
        ("8 optimizations transparent", optimizations_are_transparent),
        ("9 join block order", golden_join_block),
        ("10 parallel speedup", parallel_speedup),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let t0 = Instant::now();
        let res = f();
        let secs = t0.elapsed().as_secs_f64();
        match &res {
            Ok(d) => println!("PASS  {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                println!("FAIL  {name}: {d} [{secs:.1}s]");
                failed.push(name);
            }
        }
    }
    println!("{} of 10 criteria failed: {failed:?}", failed.len());
    // A speedup needs the cores to run on; with fewer than 8 the result is
    // reported but not enforced.
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let enforced: Vec<&&str> = failed
        .iter()
        .filter(|n| cores >= 8 || !n.starts_with("10 "))
        .collect();
    if !enforced.is_empty() {
        eprintln!("failed: {enforced:?}");
        std::process::exit(1);
    }
}
