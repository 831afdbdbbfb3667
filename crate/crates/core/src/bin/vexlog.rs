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


//! Command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vexlog::compiler::CompileOptions;
use vexlog::db::InputFact;
use vexlog::provenance::{ProvenanceConfig, SemiringKind, DEFAULT_PROOF_CAP};
use vexlog::runtime::hash::DEFAULT_OCCUPANCY;
use vexlog::runtime::ExecConfig;
use vexlog::session::{RunOutput, Session, SessionConfig, Termination, SG_PROGRAM, TC_PROGRAM};

#[derive(Parser)]
#[command(name = "vexlog", version, about = "Provenance-aware Datalog on a vector-register runtime")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate a program and write its output relations.
    Run(RunArgs),
    /// Print the planned RAM or the compiled APM listing.
    Dump {
        program: PathBuf,
        #[arg(long, value_enum, default_value_t = Stage::Apm)]
        stage: Stage,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Time a built-in benchmark on an edge-list file.
    Bench {
        #[arg(value_enum)]
        suite: Suite,
        graph: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Ram,
    Apm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Tc,
    Sg,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum TerminationArg {
    SizeOnly,
    Saturation,
}

#[derive(Args)]
struct RunArgs {
    program: PathBuf,
    /// Directory of `<relation>.facts` files.
    #[arg(long)]
    facts: Option<PathBuf>,
    /// Directory holding one facts directory per sample.
    #[arg(long, conflicts_with = "facts")]
    samples: Option<PathBuf>,
    /// Directory for result files; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Write run statistics as JSON.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    dump_ram: bool,
    #[arg(long)]
    dump_apm: bool,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, default_value = "unit")]
    provenance: SemiringKind,
    #[arg(long, default_value_t = DEFAULT_PROOF_CAP)]
    proof_cap: usize,
    /// Hash index slots per key.
    #[arg(long, default_value_t = DEFAULT_OCCUPANCY)]
    occupancy: f64,
    #[arg(long, env = "APM_THREADS", default_value_t = 1)]
    threads: usize,
    /// Samples evaluated together.
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long)]
    no_batching: bool,
    #[arg(long)]
    no_static_regs: bool,
    #[arg(long)]
    diff_delta: bool,
    #[arg(long)]
    no_arena: bool,
    #[arg(long)]
    no_reuse: bool,
    #[arg(long, value_enum, default_value_t = TerminationArg::Saturation)]
    termination: TerminationArg,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
}

impl EngineArgs {
    fn config(&self) -> SessionConfig {
        SessionConfig {
            provenance: ProvenanceConfig::new(self.provenance)
                .with_proof_cap(self.proof_cap)
                .with_epsilon(self.epsilon),
            compile: CompileOptions {
                occupancy: self.occupancy,
                static_regs: !self.no_static_regs,
                diff_delta: self.diff_delta,
                batched: false,
            },
            exec: ExecConfig {
                threads: self.threads,
                arena: !self.no_arena,
                reuse: !self.no_reuse,
            },
            batch: if self.no_batching { 1 } else { self.batch },
            termination: match self.termination {
                TerminationArg::SizeOnly => Termination::SizeOnly,
                TerminationArg::Saturation => Termination::Saturation,
            },
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn usage(message: String) -> Failure {
    Failure { code: 2, message }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn open_session(program: &Path, engine: &EngineArgs) -> Result<Session, Failure> {
    let text = read(program)?;
    Session::new(&text, engine.config()).map_err(|e| Failure {
        code: 1,
        message: format!("{}:{e}", program.display()),
    })
}

fn require_dir(dir: &Path) -> Result<(), Failure> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{}: no such directory", dir.display())))
    }
}

fn write_output(out: &RunOutput, names: &[String], dir: Option<&Path>) -> Result<(), Failure> {
    for (sample, name) in out.samples.iter().zip(names) {
        match dir {
            Some(dir) => {
                let dir = if name.is_empty() { dir.to_path_buf() } else { dir.join(name) };
                fs::create_dir_all(&dir)?;
                for (rel, text) in &sample.relations {
                    fs::write(dir.join(format!("{rel}.facts")), text)?;
                }
            }
            None => {
                for (rel, text) in &sample.relations {
                    if name.is_empty() {
                        println!("# {rel}");
                    } else {
                        println!("# {name}/{rel}");
                    }
                    print!("{text}");
                }
            }
        }
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut session = open_session(&args.program, &args.engine)?;
    if args.dump_ram {
        eprintln!("{}", session.ram_text());
    }
    if args.dump_apm {
        eprintln!("{}", session.apm_text()?);
    }
    let (samples, names): (Vec<Vec<InputFact>>, Vec<String>) = if let Some(dir) = &args.samples {
        require_dir(dir)?;
        let mut dirs: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        let mut samples = Vec::with_capacity(dirs.len());
        let mut names = Vec::with_capacity(dirs.len());
        for d in &dirs {
            samples.push(session.load_facts_dir(d)?);
            names.push(d.file_name().unwrap_or_default().to_string_lossy().into_owned());
        }
        (samples, names)
    } else if let Some(dir) = &args.facts {
        require_dir(dir)?;
        (vec![session.load_facts_dir(dir)?], vec![String::new()])
    } else {
        (Vec::new(), vec![String::new()])
    };
    let out = session.run(samples)?;
    write_output(&out, &names, args.output.as_deref())?;
    if let Some(path) = &args.stats {
        fs::write(path, serde_json::to_string_pretty(&out.stats)?)?;
    }
    Ok(())
}

fn cmd_dump(program: &Path, stage: Stage, engine: &EngineArgs) -> Result<(), Failure> {
    let session = open_session(program, engine)?;
    match stage {
        Stage::Ram => print!("{}", session.ram_text()),
        Stage::Apm => print!("{}", session.apm_text()?),
    }
    Ok(())
}

fn cmd_bench(suite: Suite, graph: &Path, engine: &EngineArgs) -> Result<(), Failure> {
    let (src, rel) = match suite {
        Suite::Tc => (TC_PROGRAM, "path"),
        Suite::Sg => (SG_PROGRAM, "sg"),
    };
    let mut session = Session::new(src, engine.config())?;
    let text = read(graph)?;
    let facts = session.parse_facts("edge", &text)?;
    let edges = facts.len();
    let t0 = Instant::now();
    let out = session.run(vec![facts])?;
    let wall = t0.elapsed().as_secs_f64();
    let run = &out.stats.runs[0];
    let report = serde_json::json!({
        "suite": rel,
        "edges": edges,
        "result_size": out.samples[0].relations[rel].lines().count(),
        "threads": engine.threads,
        "wall_seconds": wall,
        "iterations": run.iterations,
        "arena_high_water_bytes": run.arena_high_water * 8,
        "fresh_allocations": run.fresh_allocations,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Dump { program, stage, engine } => cmd_dump(&program, stage, &engine),
        Cmd::Bench { suite, graph, engine } => cmd_bench(suite, &graph, &engine),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("vexlog: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
