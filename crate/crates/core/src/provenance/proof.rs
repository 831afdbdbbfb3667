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

//! Top-1 proof semirings.
//!
//! A tag holds at most one proof: a conjunction of input facts. `⊕` keeps
//! the more likely proof, `⊗` unions two proofs and yields "no proof" when
//! the union would contain two facts of one exclusion group or grow past
//! the proof cap.

use std::sync::Arc;

use smallvec::SmallVec;

use super::{
    check_prob, FactId, InputTag, Provenance, ProvenanceConfig, ProvenanceCounters,
    ProvenanceError, ReadOut, SemiringKind, NO_GROUP,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProofFact {
    pub id: FactId,
    pub group: u32,
    pub prob: f64,
}

/// A conflict-free set of input facts, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Proof {
    pub facts: SmallVec<[ProofFact; 4]>,
    /// Product of member probabilities.
    pub prob: f64,
}

impl Proof {
    pub fn empty() -> Self {
        Self {
            facts: SmallVec::new(),
            prob: 1.0,
        }
    }

    pub fn ids(&self) -> Vec<FactId> {
        self.facts.iter().map(|f| f.id).collect()
    }

    /// `∂prob/∂p_f` for every member `f`: the product of the other members.
    pub fn gradient(&self) -> Vec<(FactId, f64)> {
        let n = self.facts.len();
        let mut suffix = vec![1.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] * self.facts[i].prob;
        }
        let mut prefix = 1.0;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push((self.facts[i].id, prefix * suffix[i + 1]));
            prefix *= self.facts[i].prob;
        }
        out
    }
}

/// `None` is the semiring zero: no proof.
pub type ProofTag = Option<Proof>;

enum UnionError {
    Conflict,
    Overflow,
}

fn union(a: &Proof, b: &Proof, cap: usize) -> Result<Proof, UnionError> {
    let mut facts: SmallVec<[ProofFact; 4]> = SmallVec::with_capacity(a.facts.len() + b.facts.len());
    let (mut i, mut j) = (0, 0);
    while i < a.facts.len() || j < b.facts.len() {
        let next = match (a.facts.get(i), b.facts.get(j)) {
            (Some(x), Some(y)) if x.id == y.id => {
                i += 1;
                j += 1;
                *x
            }
            (Some(x), Some(y)) if x.id < y.id => {
                i += 1;
                *x
            }
            (Some(_), Some(y)) => {
                j += 1;
                *y
            }
            (Some(x), None) => {
                i += 1;
                *x
            }
            (None, Some(y)) => {
                j += 1;
                *y
            }
            (None, None) => unreachable!(),
        };
        facts.push(next);
    }
    if facts.len() > cap {
        return Err(UnionError::Overflow);
    }
    let mut groups: SmallVec<[u32; 8]> = facts.iter().map(|f| f.group).filter(|&g| g != NO_GROUP).collect();
    groups.sort_unstable();
    if groups.windows(2).any(|w| w[0] == w[1]) {
        return Err(UnionError::Conflict);
    }
    let prob = facts.iter().map(|f| f.prob).product();
    Ok(Proof { facts, prob })
}

fn proof_otimes(a: &ProofTag, b: &ProofTag, cap: usize, counters: &ProvenanceCounters) -> ProofTag {
    match (a, b) {
        (Some(a), Some(b)) => match union(a, b, cap) {
            Ok(p) => Some(p),
            Err(UnionError::Conflict) => {
                ProvenanceCounters::bump(&counters.proof_conflicts, 1);
                None
            }
            Err(UnionError::Overflow) => {
                ProvenanceCounters::bump(&counters.proof_cap_overflows, 1);
                None
            }
        },
        _ => None,
    }
}

// ties keep the left operand
fn proof_oplus(a: &ProofTag, b: &ProofTag) -> ProofTag {
    match (a, b) {
        (None, _) => b.clone(),
        (_, None) => a.clone(),
        (Some(x), Some(y)) => {
            if y.prob > x.prob {
                b.clone()
            } else {
                a.clone()
            }
        }
    }
}

fn proof_saturated(eps: f64, old: &ProofTag, new: &ProofTag) -> bool {
    eps.is_infinite() || proof_oplus(old, new) == *old
}

fn input_proof(input: &InputTag, fact: FactId) -> Result<ProofTag, ProvenanceError> {
    let prob = check_prob(input, fact)?;
    let mut facts = SmallVec::new();
    facts.push(ProofFact {
        id: fact,
        group: input.group.unwrap_or(NO_GROUP),
        prob,
    });
    Ok(Some(Proof { facts, prob }))
}

fn encode_proof(t: &ProofTag, cap: usize, out: &mut Vec<u8>) {
    let start = out.len();
    match t {
        None => out.push(0),
        Some(p) => {
            out.push(1);
            out.extend_from_slice(&p.prob.to_le_bytes());
            out.extend_from_slice(&(p.facts.len() as u32).to_le_bytes());
            for f in &p.facts {
                out.extend_from_slice(&f.id.to_le_bytes());
                out.extend_from_slice(&f.group.to_le_bytes());
                out.extend_from_slice(&f.prob.to_le_bytes());
            }
        }
    }
    out.resize(start + proof_byte_size(cap), 0);
}

fn proof_byte_size(cap: usize) -> usize {
    1 + 8 + 4 + cap * 16
}

/// Most likely single proof, without derivatives.
#[derive(Debug, Clone)]
pub struct Top1Proof {
    cfg: ProvenanceConfig,
    counters: Arc<ProvenanceCounters>,
}

impl Top1Proof {
    pub fn new(cfg: ProvenanceConfig) -> Self {
        debug_assert_eq!(cfg.kind, SemiringKind::Top1Proof);
        Self {
            cfg,
            counters: Arc::default(),
        }
    }
}

impl Provenance for Top1Proof {
    type Tag = ProofTag;

    fn config(&self) -> &ProvenanceConfig {
        &self.cfg
    }

    fn counters(&self) -> &Arc<ProvenanceCounters> {
        &self.counters
    }

    fn zero(&self) -> ProofTag {
        None
    }

    fn one(&self) -> ProofTag {
        Some(Proof::empty())
    }

    fn oplus(&self, a: &ProofTag, b: &ProofTag) -> ProofTag {
        proof_oplus(a, b)
    }

    fn otimes(&self, a: &ProofTag, b: &ProofTag) -> ProofTag {
        proof_otimes(a, b, self.cfg.proof_cap, &self.counters)
    }

    fn discard(&self, t: &ProofTag) -> bool {
        t.is_none()
    }

    fn saturated(&self, old: &ProofTag, new: &ProofTag) -> bool {
        proof_saturated(self.cfg.saturation_epsilon, old, new)
    }

    fn tag_of_input(&self, input: &InputTag, fact: FactId) -> Result<ProofTag, ProvenanceError> {
        input_proof(input, fact)
    }

    fn read_out(&self, t: &ProofTag) -> ReadOut {
        ReadOut {
            probability: Some(t.as_ref().map_or(0.0, |p| p.prob)),
            gradient: None,
            proof: Some(t.as_ref().map_or_else(Vec::new, Proof::ids)),
        }
    }

    fn tag_byte_size(&self) -> usize {
        proof_byte_size(self.cfg.proof_cap)
    }

    fn encode_tag(&self, t: &ProofTag, out: &mut Vec<u8>) {
        encode_proof(t, self.cfg.proof_cap, out);
    }
}

/// Top-1 proof whose read-out also differentiates the proof probability.
#[derive(Debug, Clone)]
pub struct DiffTop1Proofs {
    cfg: ProvenanceConfig,
    counters: Arc<ProvenanceCounters>,
}

impl DiffTop1Proofs {
    pub fn new(cfg: ProvenanceConfig) -> Self {
        debug_assert_eq!(cfg.kind, SemiringKind::DiffTop1Proofs);
        Self {
            cfg,
            counters: Arc::default(),
        }
    }
}

impl Provenance for DiffTop1Proofs {
    type Tag = ProofTag;

    fn config(&self) -> &ProvenanceConfig {
        &self.cfg
    }

    fn counters(&self) -> &Arc<ProvenanceCounters> {
        &self.counters
    }

    fn zero(&self) -> ProofTag {
        None
    }

    fn one(&self) -> ProofTag {
        Some(Proof::empty())
    }

    fn oplus(&self, a: &ProofTag, b: &ProofTag) -> ProofTag {
        proof_oplus(a, b)
    }

    fn otimes(&self, a: &ProofTag, b: &ProofTag) -> ProofTag {
        proof_otimes(a, b, self.cfg.proof_cap, &self.counters)
    }

    fn discard(&self, t: &ProofTag) -> bool {
        t.is_none()
    }

    fn saturated(&self, old: &ProofTag, new: &ProofTag) -> bool {
        proof_saturated(self.cfg.saturation_epsilon, old, new)
    }

    fn tag_of_input(&self, input: &InputTag, fact: FactId) -> Result<ProofTag, ProvenanceError> {
        input_proof(input, fact)
    }

    fn read_out(&self, t: &ProofTag) -> ReadOut {
        match t {
            None => ReadOut {
                probability: Some(0.0),
                gradient: Some(Vec::new()),
                proof: Some(Vec::new()),
            },
            Some(p) => ReadOut {
                probability: Some(p.prob),
                gradient: Some(p.gradient()),
                proof: Some(p.ids()),
            },
        }
    }

    fn tag_byte_size(&self) -> usize {
        proof_byte_size(self.cfg.proof_cap)
    }

    fn encode_tag(&self, t: &ProofTag, out: &mut Vec<u8>) {
        encode_proof(t, self.cfg.proof_cap, out);
    }
}
