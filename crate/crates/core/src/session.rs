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


//! End-to-end runs: source text and facts in, rendered relations out.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::compiler::{apply_batching, compile_program, listing, CompileError, CompileOptions};
use crate::db::{load_facts_dir, parse_facts, Database, DbError, InputFact};
use crate::frontend::{compile_source, FrontendError, PlannedProgram};
use crate::provenance::{Provenance, ProvenanceConfig, ProvenanceError, SemiringKind};
use crate::runtime::{execute, ExecConfig, ExecError, ExecStats, StratumCode};
use crate::with_provenance;

/// Largest number of samples evaluated together.
pub const MAX_BATCH: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Termination {
    /// Stop once no new tuple appears; tag updates to known tuples are
    /// dropped.
    SizeOnly,
    /// Also iterate while some tag still changes by more than epsilon.
    #[default]
    Saturation,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub provenance: ProvenanceConfig,
    pub compile: CompileOptions,
    pub exec: ExecConfig,
    /// Samples per batched run; 1 runs every sample on its own.
    pub batch: usize,
    pub termination: Termination,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            provenance: ProvenanceConfig::new(SemiringKind::Unit),
            compile: CompileOptions::default(),
            exec: ExecConfig::default(),
            batch: 1,
            termination: Termination::Saturation,
        }
    }
}

impl SessionConfig {
    fn effective_provenance(&self) -> ProvenanceConfig {
        let mut p = self.provenance.clone();
        if self.termination == Termination::SizeOnly {
            p.saturation_epsilon = f64::INFINITY;
        }
        p
    }
}

/// The relations of one sample, each rendered as a `.facts` body.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleOutput {
    pub relations: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunStats {
    pub provenance: String,
    pub samples: usize,
    pub runs: Vec<ExecStats>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub samples: Vec<SampleOutput>,
    pub stats: RunStats,
}

pub struct Session {
    pub program: PlannedProgram,
    pub config: SessionConfig,
}

impl Session {
    pub fn new(source: &str, config: SessionConfig) -> Result<Self, SessionError> {
        config.provenance.validate()?;
        if config.batch == 0 || config.batch > MAX_BATCH {
            return Err(SessionError::Config(format!("batch size must be within 1..={MAX_BATCH}")));
        }
        Ok(Self {
            program: compile_source(source)?,
            config,
        })
    }

    /// Reads a directory of `<relation>.facts` files.
    pub fn load_facts_dir(&mut self, dir: &Path) -> Result<Vec<InputFact>, SessionError> {
        Ok(load_facts_dir(dir, &self.program.schemas, &mut self.program.symbols, 0)?)
    }

    /// Parses a `.facts` body for `relation`.
    pub fn parse_facts(&mut self, relation: &str, text: &str) -> Result<Vec<InputFact>, SessionError> {
        let schema = self
            .program
            .schema(relation)
            .ok_or_else(|| DbError::UnknownRelation(relation.to_string()))?
            .clone();
        Ok(parse_facts(text, &schema, &mut self.program.symbols, 0)?)
    }

    pub fn ram_text(&self) -> String {
        self.program.ram.dump(Some(&self.program.symbols))
    }

    pub fn compile(&self, batched: bool) -> Result<Vec<StratumCode>, SessionError> {
        let opts = CompileOptions {
            batched,
            ..self.config.compile.clone()
        };
        let code = if batched {
            compile_program(&apply_batching(&self.program.ram), &self.program.schemas, &opts)?
        } else {
            compile_program(&self.program.ram, &self.program.schemas, &opts)?
        };
        Ok(code)
    }

    pub fn apm_text(&self) -> Result<String, SessionError> {
        let code = self.compile(false)?;
        Ok(listing(&code).iter().map(|p| p.to_text()).collect::<Vec<_>>().join("\n"))
    }

    /// Runs every sample. Each sample sees the program's own facts plus its
    /// entry of `samples`; an empty `samples` runs the program facts alone.
    pub fn run(&self, samples: Vec<Vec<InputFact>>) -> Result<RunOutput, SessionError> {
        let samples = if samples.is_empty() { vec![Vec::new()] } else { samples };
        let n = samples.len();
        let prov_cfg = self.config.effective_provenance();
        let name = prov_cfg.kind.name().to_string();
        let (outs, runs) = with_provenance!(prov_cfg, |prov| self.run_all(&prov, samples))?;
        Ok(RunOutput {
            samples: outs,
            stats: RunStats {
                provenance: name,
                samples: n,
                runs,
            },
        })
    }

    fn run_all<P: Provenance>(
        &self,
        prov: &P,
        samples: Vec<Vec<InputFact>>,
    ) -> Result<(Vec<SampleOutput>, Vec<ExecStats>), SessionError> {
        let batch = self.config.batch;
        let plain = self.compile(false)?;
        let batched = if batch > 1 && samples.len() > 1 {
            Some(self.compile(true)?)
        } else {
            None
        };
        let mut outs = Vec::with_capacity(samples.len());
        let mut runs = Vec::new();
        let mut rest = samples.into_iter().peekable();
        while rest.peek().is_some() {
            let group: Vec<Vec<InputFact>> = rest.by_ref().take(batch).collect();
            let (code, is_batched) = match &batched {
                Some(c) if group.len() > 1 => (c, true),
                _ => (&plain, false),
            };
            let facts = self.facts_for(prov, group.iter().enumerate(), is_batched);
            let mut db = Database::load_edb(
                prov,
                &self.program.schemas,
                self.program.symbols.clone(),
                facts,
                is_batched,
            )?;
            runs.push(execute(prov, code, &mut db, &self.config.exec)?);
            for s in 0..group.len() {
                outs.push(self.render(prov, &db, s as u8)?);
            }
        }
        Ok((outs, runs))
    }

    fn facts_for<'a, P: Provenance>(
        &self,
        prov: &P,
        group: impl Iterator<Item = (usize, &'a Vec<InputFact>)>,
        batched: bool,
    ) -> Vec<InputFact> {
        let strip = prov.kind() == SemiringKind::Unit;
        let mut out = Vec::new();
        for (s, facts) in group {
            let sample = if batched { s as u8 } else { 0 };
            for f in self.program.facts.iter().chain(facts) {
                let mut f = f.clone();
                f.sample = sample;
                if strip {
                    f.tag.prob = None;
                }
                out.push(f);
            }
        }
        out
    }

    fn render<P: Provenance>(
        &self,
        prov: &P,
        db: &Database<P::Tag>,
        sample: u8,
    ) -> Result<SampleOutput, SessionError> {
        let mut relations = BTreeMap::new();
        for rel in &self.program.outputs {
            let mut text = String::new();
            for row in db.dump_relation(rel)?.into_iter().filter(|r| r.sample == sample) {
                let mut fields: Vec<String> = row.values.iter().map(|v| v.render(&db.symbols)).collect();
                fields.extend(prov.read_out(&row.tag).render_fields(|id| db.registry.local_id(id)));
                text.push_str(&fields.join("\t"));
                text.push('\n');
            }
            relations.insert(rel.clone(), text);
        }
        Ok(SampleOutput { relations })
    }
}

pub fn stats_json(stats: &RunStats) -> String {
    serde_json::to_string_pretty(stats).unwrap_or_default()
}

/// Transitive closure over an integer edge relation.
pub const TC_PROGRAM: &str = "type edge(i64, i64)\n\
                              rel path(x, y) = edge(x, y)\n\
                              rel path(x, y) = path(x, z) and edge(z, y)\n\
                              query path\n";

/// Same generation over an integer edge relation.
pub const SG_PROGRAM: &str = "type edge(i64, i64)\n\
                              rel sg(x, y) = edge(p, x) and edge(p, y) and x != y\n\
                              rel sg(x, y) = edge(a, x) and sg(a, b) and edge(b, y)\n\
                              query sg\n";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provenance::InputTag;
    use crate::value::Value;

    fn edges(list: &[(i64, i64, f64)], sample: u8) -> Vec<InputFact> {
        list.iter()
            .map(|&(a, b, p)| InputFact {
                relation: "edge".into(),
                values: vec![Value::Int(a), Value::Int(b)],
                tag: InputTag::prob(p),
                sample,
            })
            .collect()
    }

    fn session(kind: SemiringKind, batch: usize) -> Session {
        let config = SessionConfig {
            provenance: ProvenanceConfig::new(kind),
            batch,
            ..Default::default()
        };
        Session::new(TC_PROGRAM, config).unwrap()
    }

    #[test]
    fn unit_ignores_probabilities() {
        let out = session(SemiringKind::Unit, 1)
            .run(vec![edges(&[(1, 2, 0.5), (2, 3, 0.5)], 0)])
            .unwrap();
        assert_eq!(out.samples[0].relations["path"], "1\t2\n1\t3\n2\t3\n");
    }

    #[test]
    fn max_min_renders_probabilities() {
        let out = session(SemiringKind::MaxMinProb, 1)
            .run(vec![edges(&[(1, 2, 0.5), (2, 3, 0.25)], 0)])
            .unwrap();
        assert_eq!(out.samples[0].relations["path"], "1\t2\tp=0.5\n1\t3\tp=0.25\n2\t3\tp=0.25\n");
    }

    #[test]
    fn batched_matches_separate_runs() {
        let samples = vec![
            edges(&[(1, 2, 0.5), (2, 3, 0.25)], 0),
            edges(&[(2, 3, 0.9)], 0),
            edges(&[(3, 1, 0.4), (1, 2, 0.7), (2, 3, 0.6)], 0),
        ];
        for kind in [SemiringKind::DiffAddMultProb, SemiringKind::DiffTop1Proofs] {
            let one = session(kind, 1).run(samples.clone()).unwrap();
            let many = session(kind, 8).run(samples.clone()).unwrap();
            assert_eq!(many.stats.runs.len(), 1);
            assert_eq!(one.samples, many.samples, "{kind}");
        }
    }

    #[test]
    fn apm_listing_round_trips() {
        let s = session(SemiringKind::Unit, 1);
        let text = s.apm_text().unwrap();
        assert_eq!(crate::apm::parse_listing(&text).unwrap().len(), 2);
        assert!(s.ram_text().contains("join 1"));
    }
}
