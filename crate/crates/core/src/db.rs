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

//! Columnar fact storage.
//!
//! Each relation owns three tables: `stable` facts every rule has already
//! seen, `recent` facts derived (or improved) by the last iteration, and
//! `delta` facts produced by the iteration in flight. `stable` and `recent`
//! are kept sorted and disjoint at tuple level.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::provenance::{FactId, InputTag, Provenance, ProvenanceError};
use crate::value::{parse_value, Cell, SymbolTable, Value, ValueKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub name: String,
    pub kinds: Vec<ValueKind>,
}

impl Schema {
    pub fn new(name: impl Into<String>, kinds: Vec<ValueKind>) -> Self {
        Self {
            name: name.into(),
            kinds,
        }
    }

    pub fn arity(&self) -> usize {
        self.kinds.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Stable,
    Recent,
    Delta,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Stable, Partition::Recent, Partition::Delta];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Stable => "stable",
            Partition::Recent => "recent",
            Partition::Delta => "delta",
        }
    }

    pub fn from_name(s: &str) -> Option<Partition> {
        Partition::ALL.into_iter().find(|p| p.name() == s)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DbError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("{relation}, row {row}: {message}")]
    SchemaMismatch {
        relation: String,
        row: usize,
        message: String,
    },
    #[error("{relation}, row {row}: {source}")]
    Provenance {
        relation: String,
        row: usize,
        source: ProvenanceError,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("batch holds {0} samples; at most 256 are supported")]
    TooManySamples(usize),
}

/// A columnar relation instance.
///
/// `columns[c][i]` is column `c` of row `i`. When the table belongs to a
/// batched database every row also carries the id of its sample, which
/// orders before every value column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table<T> {
    pub columns: Vec<Vec<Cell>>,
    pub tags: Vec<T>,
    pub sample_ids: Option<Vec<u8>>,
}

impl<T: Clone> Table<T> {
    pub fn new(arity: usize, batched: bool) -> Self {
        Self {
            columns: vec![Vec::new(); arity],
            tags: Vec::new(),
            sample_ids: batched.then(Vec::new),
        }
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn is_batched(&self) -> bool {
        self.sample_ids.is_some()
    }

    pub fn clear(&mut self) {
        for c in &mut self.columns {
            c.clear();
        }
        self.tags.clear();
        if let Some(s) = &mut self.sample_ids {
            s.clear();
        }
    }

    pub fn push(&mut self, sample: u8, row: &[Cell], tag: T) {
        debug_assert_eq!(row.len(), self.arity());
        for (c, &v) in self.columns.iter_mut().zip(row) {
            c.push(v);
        }
        self.tags.push(tag);
        if let Some(s) = &mut self.sample_ids {
            s.push(sample);
        }
    }

    pub fn sample(&self, i: usize) -> u8 {
        self.sample_ids.as_ref().map_or(0, |s| s[i])
    }

    pub fn row(&self, i: usize) -> Vec<Cell> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Compares row `i` of `self` with row `j` of `other` by sample id,
    /// then lexicographically by column.
    pub fn cmp_rows(&self, i: usize, other: &Table<T>, j: usize) -> Ordering {
        if let (Some(a), Some(b)) = (&self.sample_ids, &other.sample_ids) {
            match a[i].cmp(&b[j]) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        for (a, b) in self.columns.iter().zip(&other.columns) {
            match a[i].cmp(&b[j]) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        Ordering::Equal
    }

    /// Strictly increasing: sorted with no duplicate tuples.
    pub fn is_sorted_unique(&self) -> bool {
        (1..self.len()).all(|i| self.cmp_rows(i - 1, self, i) == Ordering::Less)
    }

    pub fn is_sorted(&self) -> bool {
        (1..self.len()).all(|i| self.cmp_rows(i - 1, self, i) != Ordering::Greater)
    }

    /// Rows at `idx`, in that order.
    pub fn gather(&self, idx: &[usize]) -> Self {
        Self {
            columns: self
                .columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
            tags: idx.iter().map(|&i| self.tags[i].clone()).collect(),
            sample_ids: self
                .sample_ids
                .as_ref()
                .map(|s| idx.iter().map(|&i| s[i]).collect()),
        }
    }

    /// Stable lexicographic sort.
    pub fn sorted(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.cmp_rows(a, self, b));
        self.gather(&idx)
    }

    /// Collapses adjacent duplicate tuples of a sorted table with `combine`.
    pub fn unique_by(&self, mut combine: impl FnMut(&T, &T) -> T) -> Self {
        let mut out = Table::new(self.arity(), self.is_batched());
        let mut i = 0;
        while i < self.len() {
            let mut tag = self.tags[i].clone();
            let mut j = i + 1;
            while j < self.len() && self.cmp_rows(i, self, j) == Ordering::Equal {
                tag = combine(&tag, &self.tags[j]);
                j += 1;
            }
            out.push(self.sample(i), &self.row(i), tag);
            i = j;
        }
        out
    }

    /// Merges two sorted, duplicate-free tables; tuples present in both
    /// get `combine(left, right)`.
    pub fn merge_unique(&self, other: &Table<T>, mut combine: impl FnMut(&T, &T) -> T) -> Self {
        let mut out = Table::new(self.arity(), self.is_batched());
        let (mut i, mut j) = (0, 0);
        while i < self.len() || j < other.len() {
            let ord = if i == self.len() {
                Ordering::Greater
            } else if j == other.len() {
                Ordering::Less
            } else {
                self.cmp_rows(i, other, j)
            };
            match ord {
                Ordering::Less => {
                    out.push(self.sample(i), &self.row(i), self.tags[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.sample(j), &other.row(j), other.tags[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    let tag = combine(&self.tags[i], &other.tags[j]);
                    out.push(self.sample(i), &self.row(i), tag);
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }

    /// Binary-search membership of a tuple in a sorted table.
    pub fn find(&self, sample: u8, row: &[Cell]) -> Option<usize> {
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            let mut ord = self.sample(mid).cmp(&sample);
            if ord == Ordering::Equal {
                ord = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| c[mid].cmp(v))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal);
            }
            match ord {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Some(mid),
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct RelationStore<T> {
    pub schema: Schema,
    pub stable: Table<T>,
    pub recent: Table<T>,
    pub delta: Table<T>,
}

impl<T: Clone> RelationStore<T> {
    fn new(schema: Schema, batched: bool) -> Self {
        let arity = schema.arity();
        Self {
            schema,
            stable: Table::new(arity, batched),
            recent: Table::new(arity, batched),
            delta: Table::new(arity, batched),
        }
    }

    pub fn partition(&self, p: Partition) -> &Table<T> {
        match p {
            Partition::Stable => &self.stable,
            Partition::Recent => &self.recent,
            Partition::Delta => &self.delta,
        }
    }

    pub fn partition_mut(&mut self, p: Partition) -> &mut Table<T> {
        match p {
            Partition::Stable => &mut self.stable,
            Partition::Recent => &mut self.recent,
            Partition::Delta => &mut self.delta,
        }
    }
}

/// One input fact before it is assigned an id.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFact {
    pub relation: String,
    pub values: Vec<Value>,
    pub tag: InputTag,
    /// Batch member the fact belongs to; 0 when not batching.
    pub sample: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredFact {
    pub relation: String,
    /// Position among the input facts of its relation and sample.
    pub row: usize,
    pub input: InputTag,
    pub sample: u8,
    /// Id the fact would have had in an unbatched run of its sample.
    pub local_id: FactId,
}

/// Input facts by dense id.
#[derive(Debug, Clone, Default)]
pub struct FactRegistry {
    facts: Vec<RegisteredFact>,
}

impl FactRegistry {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn get(&self, id: FactId) -> Option<&RegisteredFact> {
        self.facts.get(id as usize)
    }

    pub fn local_id(&self, id: FactId) -> FactId {
        self.get(id).map_or(id, |f| f.local_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (FactId, &RegisteredFact)> {
        self.facts.iter().enumerate().map(|(i, f)| (i as FactId, f))
    }
}

/// A relation row as seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpRow<T> {
    pub sample: u8,
    pub values: Vec<Value>,
    pub tag: T,
}

#[derive(Debug, Clone)]
pub struct Database<T> {
    relations: Vec<RelationStore<T>>,
    index: HashMap<String, usize>,
    pub symbols: SymbolTable,
    pub registry: FactRegistry,
    batched: bool,
}

impl<T: Clone> Database<T> {
    pub fn new(schemas: &[Schema], symbols: SymbolTable, batched: bool) -> Self {
        let relations: Vec<_> = schemas
            .iter()
            .map(|s| RelationStore::new(s.clone(), batched))
            .collect();
        let index = schemas
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.clone(), i))
            .collect();
        Self {
            relations,
            index,
            symbols,
            registry: FactRegistry::default(),
            batched,
        }
    }

    /// Builds a database holding `facts`, all placed in `recent`.
    ///
    /// Fact ids are assigned densely in input order. Exclusion groups are
    /// scoped per sample. Duplicate tuples are combined with `⊕`.
    pub fn load_edb<P: Provenance<Tag = T>>(
        prov: &P,
        schemas: &[Schema],
        symbols: SymbolTable,
        facts: Vec<InputFact>,
        batched: bool,
    ) -> Result<Self, DbError> {
        let mut db = Self::new(schemas, symbols, batched);
        let mut groups: HashMap<(u8, u32), u32> = HashMap::new();
        let mut rows_seen: HashMap<(u8, String), usize> = HashMap::new();
        let mut sample_start: HashMap<u8, FactId> = HashMap::new();
        let mut staging: Vec<Table<T>> = db
            .relations
            .iter()
            .map(|r| Table::new(r.schema.arity(), batched))
            .collect();
        for (i, fact) in facts.into_iter().enumerate() {
            let id = i as FactId;
            let rel = *db
                .index
                .get(&fact.relation)
                .ok_or_else(|| DbError::UnknownRelation(fact.relation.clone()))?;
            let schema = &db.relations[rel].schema;
            let row = {
                let n = rows_seen.entry((fact.sample, fact.relation.clone())).or_default();
                *n += 1;
                *n - 1
            };
            if fact.values.len() != schema.arity() {
                return Err(DbError::SchemaMismatch {
                    relation: fact.relation,
                    row,
                    message: format!("expected {} values, found {}", schema.arity(), fact.values.len()),
                });
            }
            for (c, (v, k)) in fact.values.iter().zip(&schema.kinds).enumerate() {
                if v.kind() != *k {
                    return Err(DbError::SchemaMismatch {
                        relation: fact.relation,
                        row,
                        message: format!("column {c} expects {k}, found {}", v.kind()),
                    });
                }
            }
            if !batched && fact.sample != 0 {
                return Err(DbError::SchemaMismatch {
                    relation: fact.relation,
                    row,
                    message: "sample id on an unbatched database".into(),
                });
            }
            let mut input = fact.tag;
            if let Some(g) = input.group {
                let next = groups.len() as u32;
                input.group = Some(*groups.entry((fact.sample, g)).or_insert(next));
            }
            let tag = prov.tag_of_input(&input, id).map_err(|source| DbError::Provenance {
                relation: fact.relation.clone(),
                row,
                source,
            })?;
            let start = *sample_start.entry(fact.sample).or_insert(id);
            let cells: Vec<Cell> = fact.values.iter().map(|v| v.to_cell()).collect();
            staging[rel].push(fact.sample, &cells, tag);
            db.registry.facts.push(RegisteredFact {
                relation: fact.relation,
                row,
                input: fact.tag,
                sample: fact.sample,
                local_id: id - start,
            });
        }
        for (store, table) in db.relations.iter_mut().zip(staging) {
            store.recent = table.sorted().unique_by(|a, b| prov.oplus(a, b));
        }
        Ok(db)
    }

    pub fn is_batched(&self) -> bool {
        self.batched
    }

    pub fn schemas(&self) -> impl Iterator<Item = &Schema> {
        self.relations.iter().map(|r| &r.schema)
    }

    pub fn relation(&self, name: &str) -> Result<&RelationStore<T>, DbError> {
        self.index
            .get(name)
            .map(|&i| &self.relations[i])
            .ok_or_else(|| DbError::UnknownRelation(name.to_string()))
    }

    pub fn relation_mut(&mut self, name: &str) -> Result<&mut RelationStore<T>, DbError> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.relations[i]),
            None => Err(DbError::UnknownRelation(name.to_string())),
        }
    }

    /// `stable := stable ∪ recent`, `recent := delta`, `delta := ∅`.
    ///
    /// Tuples present in both `stable` and `recent` are combined with `⊕`.
    pub fn promote_partitions<P: Provenance<Tag = T>>(
        &mut self,
        prov: &P,
        relation: &str,
    ) -> Result<(), DbError> {
        let batched = self.batched;
        let store = self.relation_mut(relation)?;
        debug_assert!(store.delta.is_sorted_unique());
        let arity = store.schema.arity();
        let merged = store.stable.merge_unique(&store.recent, |a, b| prov.oplus(a, b));
        store.stable = merged;
        store.recent = std::mem::replace(&mut store.delta, Table::new(arity, batched));
        Ok(())
    }

    /// Number of known tuples: `Σ |stable| + |recent|`.
    pub fn total_fact_count(&self) -> usize {
        self.relations
            .iter()
            .map(|r| r.stable.len() + r.recent.len())
            .sum()
    }

    /// Rows of `stable ∪ recent` in tuple order.
    pub fn dump_relation(&self, relation: &str) -> Result<Vec<DumpRow<T>>, DbError> {
        let store = self.relation(relation)?;
        let kinds = &store.schema.kinds;
        let (s, r) = (&store.stable, &store.recent);
        let mut out = Vec::with_capacity(s.len() + r.len());
        let (mut i, mut j) = (0, 0);
        let emit = |t: &Table<T>, k: usize| DumpRow {
            sample: t.sample(k),
            values: kinds
                .iter()
                .zip(&t.columns)
                .map(|(&kind, c)| Value::from_cell(kind, c[k]))
                .collect(),
            tag: t.tags[k].clone(),
        };
        while i < s.len() || j < r.len() {
            let take_stable = j == r.len() || (i < s.len() && s.cmp_rows(i, r, j) != Ordering::Greater);
            if take_stable {
                out.push(emit(s, i));
                i += 1;
            } else {
                out.push(emit(r, j));
                j += 1;
            }
        }
        Ok(out)
    }
}

/// Parses the body of a `<relation>.facts` file.
///
/// Lines are tab-separated (any whitespace when a line has no tab). A line
/// may start with a probability column, may carry an `@g<N>` exclusion
/// group token and a `p=<prob>` token. `proof=` and `grad=` tokens, as
/// written by result files, are ignored.
pub fn parse_facts(
    text: &str,
    schema: &Schema,
    symbols: &mut SymbolTable,
    sample: u8,
) -> Result<Vec<InputFact>, DbError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |message: String| DbError::SchemaMismatch {
            relation: schema.name.clone(),
            row: lineno + 1,
            message,
        };
        let raw: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).filter(|t| !t.is_empty()).collect()
        } else {
            line.split_whitespace().collect()
        };
        let mut tag = InputTag::default();
        let mut tokens = Vec::with_capacity(raw.len());
        for tok in raw {
            if let Some(g) = tok.strip_prefix("@g") {
                let g = g.parse::<u32>().map_err(|_| err(format!("bad group token `{tok}`")))?;
                tag.group = Some(g);
            } else if let Some(p) = tok.strip_prefix("p=") {
                let p = p.parse::<f64>().map_err(|_| err(format!("bad probability `{tok}`")))?;
                tag.prob = Some(p);
            } else if tok.starts_with("proof=") || tok.starts_with("grad=") {
                continue;
            } else {
                tokens.push(tok);
            }
        }
        if tokens.len() == schema.arity() + 1 {
            if tag.prob.is_some() {
                return Err(err("probability given twice".into()));
            }
            let p = tokens[0]
                .parse::<f64>()
                .map_err(|_| err(format!("bad probability `{}`", tokens[0])))?;
            tag.prob = Some(p);
            tokens.remove(0);
        }
        if tokens.len() != schema.arity() {
            return Err(err(format!(
                "expected {} values, found {}",
                schema.arity(),
                tokens.len()
            )));
        }
        let mut values = Vec::with_capacity(tokens.len());
        for (c, (tok, &kind)) in tokens.iter().zip(&schema.kinds).enumerate() {
            let v = parse_value(kind, tok, symbols)
                .ok_or_else(|| err(format!("column {c}: `{tok}` is not a valid {kind}")))?;
            values.push(v);
        }
        out.push(InputFact {
            relation: schema.name.clone(),
            values,
            tag,
            sample,
        });
    }
    Ok(out)
}

/// Reads every `<relation>.facts` file in `dir`, in schema order.
pub fn load_facts_dir(
    dir: &Path,
    schemas: &[Schema],
    symbols: &mut SymbolTable,
    sample: u8,
) -> Result<Vec<InputFact>, DbError> {
    let io = |e: std::io::Error, p: &Path| DbError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    if !dir.is_dir() {
        return Err(DbError::Io {
            path: dir.display().to_string(),
            message: "not a directory".into(),
        });
    }
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io(e, dir))? {
        let entry = entry.map_err(|e| io(e, dir))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("facts") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    for n in &names {
        if !schemas.iter().any(|s| &s.name == n) {
            return Err(DbError::UnknownRelation(n.clone()));
        }
    }
    let mut out = Vec::new();
    for schema in schemas {
        if !names.contains(&schema.name) {
            continue;
        }
        let path = dir.join(format!("{}.facts", schema.name));
        let text = fs::read_to_string(&path).map_err(|e| io(e, &path))?;
        out.extend(parse_facts(&text, schema, symbols, sample)?);
    }
    Ok(out)
}
