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

//! Provenance semirings.
//!
//! A provenance is a semiring `(T, 0, 1, ⊕, ⊗)` whose elements tag facts.
//! `⊕` combines alternative derivations of one tuple, `⊗` combines the
//! premises of a single derivation. Seven instances are provided; the
//! runtime is generic over [`Provenance`] and monomorphised per instance.
//!
//! Tags are self-contained: proofs carry the probability and exclusion
//! group of every member fact, and dual numbers carry their own sparse
//! gradient, so every operation is a pure function of its operands and the
//! [`ProvenanceConfig`].

mod dual;
mod proof;
mod prob;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::format_float;

pub use dual::{DiffAddMultProb, DiffMaxMinProb, DualTag, Gradient};
pub use proof::{DiffTop1Proofs, Proof, ProofFact, ProofTag, Top1Proof};
pub use prob::{AddMultProb, MaxMinProb, UnitProvenance};

/// Dense id of an input fact.
pub type FactId = u32;

/// Exclusion-group sentinel for facts that declare no group.
pub const NO_GROUP: u32 = u32::MAX;

pub const DEFAULT_PROOF_CAP: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SemiringKind {
    Unit,
    MaxMinProb,
    AddMultProb,
    Top1Proof,
    DiffMaxMinProb,
    DiffAddMultProb,
    DiffTop1Proofs,
}

impl SemiringKind {
    pub const ALL: [SemiringKind; 7] = [
        SemiringKind::Unit,
        SemiringKind::MaxMinProb,
        SemiringKind::AddMultProb,
        SemiringKind::Top1Proof,
        SemiringKind::DiffMaxMinProb,
        SemiringKind::DiffAddMultProb,
        SemiringKind::DiffTop1Proofs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SemiringKind::Unit => "unit",
            SemiringKind::MaxMinProb => "max-min-prob",
            SemiringKind::AddMultProb => "add-mult-prob",
            SemiringKind::Top1Proof => "top-1-proof",
            SemiringKind::DiffMaxMinProb => "diff-max-min-prob",
            SemiringKind::DiffAddMultProb => "diff-add-mult-prob",
            SemiringKind::DiffTop1Proofs => "diff-top-1-proofs",
        }
    }

    /// Whether input facts carry a probability.
    pub fn is_probabilistic(self) -> bool {
        !matches!(self, SemiringKind::Unit)
    }

    pub fn is_differentiable(self) -> bool {
        matches!(
            self,
            SemiringKind::DiffMaxMinProb | SemiringKind::DiffAddMultProb | SemiringKind::DiffTop1Proofs
        )
    }

    pub fn tracks_proofs(self) -> bool {
        matches!(self, SemiringKind::Top1Proof | SemiringKind::DiffTop1Proofs)
    }
}

impl fmt::Display for SemiringKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SemiringKind {
    type Err = ProvenanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SemiringKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ProvenanceError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProvenanceConfig {
    pub kind: SemiringKind,
    /// Maximum number of facts in a proof, and of entries in a sparse gradient.
    pub proof_cap: usize,
    /// Tag updates that move the read-out by at most this much are ignored.
    /// `f64::INFINITY` ignores every tag update once a tuple is known.
    pub saturation_epsilon: f64,
}

impl ProvenanceConfig {
    pub fn new(kind: SemiringKind) -> Self {
        Self {
            kind,
            proof_cap: DEFAULT_PROOF_CAP,
            saturation_epsilon: 0.0,
        }
    }

    pub fn with_proof_cap(mut self, cap: usize) -> Self {
        self.proof_cap = cap;
        self
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.saturation_epsilon = eps;
        self
    }

    pub fn validate(&self) -> Result<(), ProvenanceError> {
        if self.proof_cap == 0 {
            return Err(ProvenanceError::InvalidConfig("proof cap must be at least 1".into()));
        }
        if self.saturation_epsilon.is_nan() || self.saturation_epsilon < 0.0 {
            return Err(ProvenanceError::InvalidConfig(
                "saturation epsilon must be a non-negative number".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProvenanceError {
    #[error("unknown provenance `{0}`")]
    UnknownKind(String),
    #[error("invalid provenance configuration: {0}")]
    InvalidConfig(String),
    #[error("fact {fact}: {kind} does not accept a probability")]
    UnexpectedProbability { kind: SemiringKind, fact: FactId },
    #[error("fact {fact}: probability {prob} is outside [0, 1]")]
    ProbabilityOutOfRange { fact: FactId, prob: f64 },
}

/// The payload an input fact is loaded with.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InputTag {
    pub prob: Option<f64>,
    /// Global exclusion group; two distinct facts of one group conflict.
    pub group: Option<u32>,
}

impl InputTag {
    pub fn prob(p: f64) -> Self {
        Self { prob: Some(p), group: None }
    }

    pub fn with_group(mut self, group: u32) -> Self {
        self.group = Some(group);
        self
    }
}

/// Counters shared by every clone of a provenance instance.
#[derive(Debug, Default)]
pub struct ProvenanceCounters {
    pub gradient_entries_dropped: AtomicU64,
    pub proof_cap_overflows: AtomicU64,
    pub proof_conflicts: AtomicU64,
}

impl ProvenanceCounters {
    pub(crate) fn bump(counter: &AtomicU64, by: u64) {
        counter.fetch_add(by, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            gradient_entries_dropped: self.gradient_entries_dropped.load(Ordering::Relaxed),
            proof_cap_overflows: self.proof_cap_overflows.load(Ordering::Relaxed),
            proof_conflicts: self.proof_conflicts.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CounterSnapshot {
    pub gradient_entries_dropped: u64,
    pub proof_cap_overflows: u64,
    pub proof_conflicts: u64,
}

/// What a tag tells the outside world.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReadOut {
    pub probability: Option<f64>,
    /// Partial derivatives of `probability` by input fact, sorted by fact id.
    pub gradient: Option<Vec<(FactId, f64)>>,
    /// Member facts of the chosen proof, sorted.
    pub proof: Option<Vec<FactId>>,
}

impl ReadOut {
    /// Renders the tag fields as tab-separated `p=`, `proof=` and `grad=`
    /// tokens. `map_id` rewrites fact ids (used to give batched runs
    /// per-sample numbering).
    pub fn render_fields(&self, map_id: impl Fn(FactId) -> FactId) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(p) = self.probability {
            out.push(format!("p={}", format_float(p)));
        }
        if let Some(proof) = &self.proof {
            let ids: Vec<String> = proof.iter().map(|&f| map_id(f).to_string()).collect();
            out.push(format!("proof=[{}]", ids.join(",")));
        }
        if let Some(grad) = &self.gradient {
            let entries: Vec<String> = grad
                .iter()
                .map(|&(f, v)| format!("{}:{}", map_id(f), format_float(v)))
                .collect();
            out.push(format!("grad={{{}}}", entries.join(",")));
        }
        out
    }
}

/// A provenance semiring instance.
///
/// Implementations are cheap to clone and safe to share between worker
/// threads; every operation is pure apart from the diagnostic counters.
pub trait Provenance: Clone + Send + Sync + 'static {
    type Tag: Clone + Send + Sync + PartialEq + fmt::Debug + 'static;

    fn config(&self) -> &ProvenanceConfig;

    fn counters(&self) -> &Arc<ProvenanceCounters>;

    fn kind(&self) -> SemiringKind {
        self.config().kind
    }

    /// Additive identity.
    fn zero(&self) -> Self::Tag;

    /// Multiplicative identity.
    fn one(&self) -> Self::Tag;

    fn oplus(&self, a: &Self::Tag, b: &Self::Tag) -> Self::Tag;

    fn otimes(&self, a: &Self::Tag, b: &Self::Tag) -> Self::Tag;

    /// Tuples whose tag is discarded are treated as not derived.
    fn discard(&self, t: &Self::Tag) -> bool;

    /// True iff replacing `old` by `old ⊕ new` changes nothing beyond the
    /// configured epsilon.
    fn saturated(&self, old: &Self::Tag, new: &Self::Tag) -> bool;

    fn tag_of_input(&self, input: &InputTag, fact: FactId) -> Result<Self::Tag, ProvenanceError>;

    fn read_out(&self, t: &Self::Tag) -> ReadOut;

    /// Fixed serialized size of any tag of this kind.
    fn tag_byte_size(&self) -> usize;

    /// Appends exactly [`Provenance::tag_byte_size`] bytes.
    fn encode_tag(&self, t: &Self::Tag, out: &mut Vec<u8>);
}

pub(crate) fn clamp01(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

pub(crate) fn check_prob(input: &InputTag, fact: FactId) -> Result<f64, ProvenanceError> {
    let p = input.prob.unwrap_or(1.0);
    if !(0.0..=1.0).contains(&p) {
        return Err(ProvenanceError::ProbabilityOutOfRange { fact, prob: p });
    }
    Ok(p)
}

/// Saturation for probability-valued tags.
pub(crate) fn prob_saturated(eps: f64, old: f64, combined: f64) -> bool {
    eps.is_infinite() || (clamp01(combined) - clamp01(old)).abs() <= eps
}

/// Calls `$body` with `$prov` bound to the concrete provenance for `$cfg`.
#[macro_export]
macro_rules! with_provenance {
    ($cfg:expr, |$prov:ident| $body:expr) => {{
        let cfg: $crate::provenance::ProvenanceConfig = $cfg;
        match cfg.kind {
            $crate::provenance::SemiringKind::Unit => {
                let $prov = $crate::provenance::UnitProvenance::new(cfg);
                $body
            }
            $crate::provenance::SemiringKind::MaxMinProb => {
                let $prov = $crate::provenance::MaxMinProb::new(cfg);
                $body
            }
            $crate::provenance::SemiringKind::AddMultProb => {
                let $prov = $crate::provenance::AddMultProb::new(cfg);
                $body
            }
            $crate::provenance::SemiringKind::Top1Proof => {
                let $prov = $crate::provenance::Top1Proof::new(cfg);
                $body
            }
            $crate::provenance::SemiringKind::DiffMaxMinProb => {
                let $prov = $crate::provenance::DiffMaxMinProb::new(cfg);
                $body
            }
            $crate::provenance::SemiringKind::DiffAddMultProb => {
                let $prov = $crate::provenance::DiffAddMultProb::new(cfg);
                $body
            }
            $crate::provenance::SemiringKind::DiffTop1Proofs => {
                let $prov = $crate::provenance::DiffTop1Proofs::new(cfg);
                $body
            }
        }
    }};
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip_through_names() {
        for k in SemiringKind::ALL {
            assert_eq!(k.name().parse::<SemiringKind>().unwrap(), k);
        }
        assert!("top-3-proofs".parse::<SemiringKind>().is_err());
    }

    #[test]
    fn zero_cap_is_rejected() {
        let cfg = ProvenanceConfig::new(SemiringKind::Top1Proof).with_proof_cap(0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn readout_rendering() {
        let r = ReadOut {
            probability: Some(0.45),
            gradient: Some(vec![(0, 0.5), (1, 0.9)]),
            proof: Some(vec![0, 1]),
        };
        assert_eq!(
            r.render_fields(|f| f),
            vec!["p=0.45", "proof=[0,1]", "grad={0:0.5,1:0.9}"]
        );
    }
}
