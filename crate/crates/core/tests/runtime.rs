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


mod common;

use common::*;
use vexlog::provenance::SemiringKind;
use vexlog::session::{Session, SessionConfig, TC_PROGRAM};

fn tc_stats(edges: &[Edge]) -> (Vec<Row>, vexlog::runtime::ExecStats) {
    let out = run(TC_PROGRAM, config(SemiringKind::Unit), vec![facts("edge", &plain(edges))]);
    (parse_rows(&out.samples[0].relations["path"]), out.stats.runs[0].clone())
}

#[test]
fn chain_takes_three_iterations() {
    let (rows, stats) = tc_stats(&[(1, 2), (2, 3)]);
    assert_eq!(rows.len(), 3);
    assert_eq!(stats.iterations, 3);
}

#[test]
fn empty_input_takes_one_iteration() {
    let (rows, stats) = tc_stats(&[]);
    assert!(rows.is_empty());
    assert_eq!(stats.iterations, 1);
}

#[test]
fn self_loop_terminates() {
    let (rows, _) = tc_stats(&[(7, 7)]);
    assert_eq!(rows.len(), 1);
}

#[test]
fn static_index_is_built_once() {
    let (_, stats) = tc_stats(&[(1, 2), (2, 3), (3, 4), (4, 5)]);
    assert!(stats.static_skips > 0);
}

#[test]
fn later_iterations_reuse_buffers() {
    let mut r = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(11);
    let edges = random_digraph(&mut r, 200, 0.01);
    let (_, stats) = tc_stats(&edges);
    assert!(stats.reuse_hits > 0);
    assert!(stats.arena_high_water > 0);
}

#[test]
fn arithmetic_and_division() {
    let src = "type num(i64)\n\
               rel half(x / 2) = num(x)\n\
               rel inv(12 / x) = num(x)\n\
               query half\nquery inv\n";
    let mut s = Session::new(src, SessionConfig::default()).unwrap();
    let f = s.parse_facts("num", "0\n3\n4\n").unwrap();
    let out = s.run(vec![f]).unwrap();
    assert_eq!(out.samples[0].relations["half"], "0\n1\n2\n");
    // Division by zero drops the row.
    assert_eq!(out.samples[0].relations["inv"], "3\n4\n");
}

#[test]
fn termination_modes_agree_on_tuples() {
    let edges = [(1, 2), (2, 3), (1, 3), (3, 1)];
    let pe: Vec<PEdge> = edges
        .iter()
        .zip([0.5, 0.6, 0.2, 0.9])
        .map(|(&(from, to), prob)| PEdge {
            from,
            to,
            prob,
            group: None,
        })
        .collect();
    let mut size_only = config(SemiringKind::MaxMinProb);
    size_only.termination = vexlog::session::Termination::SizeOnly;
    let a = run(TC_PROGRAM, size_only, vec![facts("edge", &pe)]);
    let b = run(TC_PROGRAM, config(SemiringKind::MaxMinProb), vec![facts("edge", &pe)]);
    assert_eq!(pairs(&a.samples[0].relations["path"]), pairs(&b.samples[0].relations["path"]));
    // Saturation keeps improving (1,3) through 1 -> 2 -> 3.
    let best = parse_rows(&b.samples[0].relations["path"])
        .into_iter()
        .find(|r| r.values == [1, 3])
        .unwrap();
    assert_eq!(best.p, Some(0.5));
}
