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


use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TC: &str = "type edge(i64, i64)\nrel path(x,y) = edge(x,y)\nrel path(x,y) = path(x,z) and edge(z,y)\n";

fn vexlog(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vexlog"))
        .args(args)
        .current_dir(dir)
        .env_remove("APM_THREADS")
        .output()
        .unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tc.dl"), TC).unwrap();
    fs::create_dir(dir.path().join("facts")).unwrap();
    fs::write(dir.path().join("facts/edge.facts"), "0.5\t1\t2\n0.8\t2\t3\n").unwrap();
    dir
}

#[test]
fn run_writes_result_files() {
    let dir = setup();
    let out = vexlog(&["run", "tc.dl", "--facts", "facts", "-o", "out", "--stats", "stats.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("out/path.facts")).unwrap(), "1\t2\n1\t3\n2\t3\n");
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["provenance"], "unit");
    assert_eq!(stats["runs"][0]["iterations"], 3);
}

#[test]
fn differentiable_run_reports_gradients() {
    let dir = setup();
    let out = vexlog(&["run", "tc.dl", "--facts", "facts", "--provenance", "diff-add-mult-prob"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("1\t3\tp=0.4\tgrad={0:0.8,1:0.5}"), "{text}");
}

#[test]
fn missing_facts_dir_exits_2() {
    let dir = setup();
    let out = vexlog(&["run", "tc.dl", "--facts", "nowhere"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn syntax_error_names_the_file() {
    let dir = setup();
    fs::write(dir.path().join("bad.dl"), "rel p(x) = ").unwrap();
    let out = vexlog(&["run", "bad.dl"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.dl:1:"));
}

#[test]
fn samples_are_written_per_directory() {
    let dir = setup();
    for (name, body) in [("a", "1\t2\n"), ("b", "2\t3\n3\t4\n")] {
        let d = dir.path().join("batch").join(name);
        fs::create_dir_all(&d).unwrap();
        fs::write(d.join("edge.facts"), body).unwrap();
    }
    let out = vexlog(&["run", "tc.dl", "--samples", "batch", "-o", "out"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("out/a/path.facts")).unwrap(), "1\t2\n");
    assert_eq!(
        fs::read_to_string(dir.path().join("out/b/path.facts")).unwrap(),
        "2\t3\n2\t4\n3\t4\n"
    );
    let unbatched = vexlog(&["run", "tc.dl", "--samples", "batch", "--no-batching"], dir.path());
    let batched = vexlog(&["run", "tc.dl", "--samples", "batch"], dir.path());
    assert_eq!(unbatched.stdout, batched.stdout);
}

#[test]
fn pass_toggles_do_not_change_results() {
    let dir = setup();
    let base = vexlog(&["run", "tc.dl", "--facts", "facts", "--provenance", "diff-top-1-proofs"], dir.path());
    for flag in ["--no-arena", "--no-reuse", "--no-static-regs", "--diff-delta"] {
        let out = vexlog(
            &["run", "tc.dl", "--facts", "facts", "--provenance", "diff-top-1-proofs", flag],
            dir.path(),
        );
        assert_eq!(out.stdout, base.stdout, "{flag}");
    }
}

#[test]
fn dump_stages() {
    let dir = setup();
    let ram = vexlog(&["dump", "tc.dl", "--stage", "ram"], dir.path());
    let ram = String::from_utf8(ram.stdout).unwrap();
    assert!(ram.contains("(join 1"), "{ram}");
    let apm = vexlog(&["dump", "tc.dl"], dir.path());
    let apm = String::from_utf8(apm.stdout).unwrap();
    assert!(apm.contains("program s0.step"));
    assert!(apm.contains("join<1>"));
    assert_eq!(vexlog::apm::parse_listing(&apm).unwrap().len(), 2);

    fs::write(dir.path().join("empty.dl"), "").unwrap();
    let out = vexlog(&["dump", "empty.dl"], dir.path());
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn bench_reports_closure_size() {
    let dir = setup();
    fs::write(dir.path().join("tri.txt"), "1 2\n2 3\n3 1\n").unwrap();
    let out = vexlog(&["bench", "tc", "tri.txt"], dir.path());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["result_size"], 9);

    fs::write(dir.path().join("tree.txt"), "0 1\n0 2\n1 3\n1 4\n2 5\n2 6\n").unwrap();
    let out = vexlog(&["bench", "sg", "tree.txt"], dir.path());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // Siblings 1/2 and every pair among 3..=6.
    assert_eq!(report["result_size"], 2 + 12);

    fs::write(dir.path().join("none.txt"), "").unwrap();
    let out = vexlog(&["bench", "tc", "none.txt"], dir.path());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["result_size"], 0);
    assert_eq!(report["iterations"], 1);
}

#[test]
fn malformed_graph_fails() {
    let dir = setup();
    fs::write(dir.path().join("bad.txt"), "1 2 3 4\n").unwrap();
    let out = vexlog(&["bench", "tc", "bad.txt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
