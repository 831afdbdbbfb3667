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

//! Unit and the two scalar probability semirings.

use std::sync::Arc;

use super::{
    check_prob, clamp01, prob_saturated, FactId, InputTag, Provenance, ProvenanceConfig,
    ProvenanceCounters, ProvenanceError, ReadOut, SemiringKind,
};

/// Discrete reasoning: a tuple is either derived or not.
#[derive(Debug, Clone)]
pub struct UnitProvenance {
    cfg: ProvenanceConfig,
    counters: Arc<ProvenanceCounters>,
}

impl UnitProvenance {
    pub fn new(cfg: ProvenanceConfig) -> Self {
        debug_assert_eq!(cfg.kind, SemiringKind::Unit);
        Self {
            cfg,
            counters: Arc::default(),
        }
    }
}

impl Provenance for UnitProvenance {
    type Tag = ();

    fn config(&self) -> &ProvenanceConfig {
        &self.cfg
    }

    fn counters(&self) -> &Arc<ProvenanceCounters> {
        &self.counters
    }

    fn zero(&self) {}

    fn one(&self) {}

    fn oplus(&self, _: &(), _: &()) {}

    fn otimes(&self, _: &(), _: &()) {}

    fn discard(&self, _: &()) -> bool {
        false
    }

    fn saturated(&self, _: &(), _: &()) -> bool {
        true
    }

    fn tag_of_input(&self, input: &InputTag, fact: FactId) -> Result<(), ProvenanceError> {
        match input.prob {
            Some(_) => Err(ProvenanceError::UnexpectedProbability {
                kind: SemiringKind::Unit,
                fact,
            }),
            None => Ok(()),
        }
    }

    fn read_out(&self, _: &()) -> ReadOut {
        ReadOut::default()
    }

    fn tag_byte_size(&self) -> usize {
        0
    }

    fn encode_tag(&self, _: &(), _: &mut Vec<u8>) {}
}

/// Fuzzy reasoning: a derivation is as likely as its weakest premise, a
/// tuple as likely as its best derivation.
#[derive(Debug, Clone)]
pub struct MaxMinProb {
    cfg: ProvenanceConfig,
    counters: Arc<ProvenanceCounters>,
}

impl MaxMinProb {
    pub fn new(cfg: ProvenanceConfig) -> Self {
        debug_assert_eq!(cfg.kind, SemiringKind::MaxMinProb);
        Self {
            cfg,
            counters: Arc::default(),
        }
    }
}

impl Provenance for MaxMinProb {
    type Tag = f64;

    fn config(&self) -> &ProvenanceConfig {
        &self.cfg
    }

    fn counters(&self) -> &Arc<ProvenanceCounters> {
        &self.counters
    }

    fn zero(&self) -> f64 {
        0.0
    }

    fn one(&self) -> f64 {
        1.0
    }

    // ties keep the left operand
    fn oplus(&self, a: &f64, b: &f64) -> f64 {
        if b > a {
            *b
        } else {
            *a
        }
    }

    fn otimes(&self, a: &f64, b: &f64) -> f64 {
        if b < a {
            *b
        } else {
            *a
        }
    }

    fn discard(&self, t: &f64) -> bool {
        *t <= 0.0
    }

    fn saturated(&self, old: &f64, new: &f64) -> bool {
        prob_saturated(self.cfg.saturation_epsilon, *old, self.oplus(old, new))
    }

    fn tag_of_input(&self, input: &InputTag, fact: FactId) -> Result<f64, ProvenanceError> {
        check_prob(input, fact)
    }

    fn read_out(&self, t: &f64) -> ReadOut {
        ReadOut {
            probability: Some(clamp01(*t)),
            ..ReadOut::default()
        }
    }

    fn tag_byte_size(&self) -> usize {
        8
    }

    fn encode_tag(&self, t: &f64, out: &mut Vec<u8>) {
        out.extend_from_slice(&t.to_le_bytes());
    }
}

/// Sum-over-derivations probability. Accumulates unclamped; only
/// [`Provenance::read_out`] clamps into `[0, 1]`.
#[derive(Debug, Clone)]
pub struct AddMultProb {
    cfg: ProvenanceConfig,
    counters: Arc<ProvenanceCounters>,
}

impl AddMultProb {
    pub fn new(cfg: ProvenanceConfig) -> Self {
        debug_assert_eq!(cfg.kind, SemiringKind::AddMultProb);
        Self {
            cfg,
            counters: Arc::default(),
        }
    }
}

impl Provenance for AddMultProb {
    type Tag = f64;

    fn config(&self) -> &ProvenanceConfig {
        &self.cfg
    }

    fn counters(&self) -> &Arc<ProvenanceCounters> {
        &self.counters
    }

    fn zero(&self) -> f64 {
        0.0
    }

    fn one(&self) -> f64 {
        1.0
    }

    fn oplus(&self, a: &f64, b: &f64) -> f64 {
        a + b
    }

    fn otimes(&self, a: &f64, b: &f64) -> f64 {
        a * b
    }

    fn discard(&self, t: &f64) -> bool {
        *t <= 0.0
    }

    fn saturated(&self, old: &f64, new: &f64) -> bool {
        prob_saturated(self.cfg.saturation_epsilon, *old, self.oplus(old, new))
    }

    fn tag_of_input(&self, input: &InputTag, fact: FactId) -> Result<f64, ProvenanceError> {
        check_prob(input, fact)
    }

    fn read_out(&self, t: &f64) -> ReadOut {
        ReadOut {
            probability: Some(clamp01(*t)),
            ..ReadOut::default()
        }
    }

    fn tag_byte_size(&self) -> usize {
        8
    }

    fn encode_tag(&self, t: &f64, out: &mut Vec<u8>) {
        out.extend_from_slice(&t.to_le_bytes());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mm() -> MaxMinProb {
        MaxMinProb::new(ProvenanceConfig::new(SemiringKind::MaxMinProb))
    }

    fn am() -> AddMultProb {
        AddMultProb::new(ProvenanceConfig::new(SemiringKind::AddMultProb))
    }

    #[test]
    fn max_min_identities_and_ops() {
        let p = mm();
        assert_eq!(p.zero(), 0.0);
        assert_eq!(p.one(), 1.0);
        assert_eq!(p.oplus(&0.3, &0.8), 0.8);
        assert_eq!(p.otimes(&0.3, &0.8), 0.3);
    }

    #[test]
    fn max_min_saturation() {
        let p = mm();
        assert!(p.saturated(&0.8, &0.5));
        assert!(!p.saturated(&0.5, &0.8));
    }

    #[test]
    fn add_mult_sums_and_clamps_only_on_read_out() {
        let p = am();
        assert!((p.oplus(&0.3, &0.4) - 0.7).abs() < 1e-15);
        assert_eq!(p.oplus(&0.9, &0.4), 1.3);
        assert_eq!(p.read_out(&1.3).probability, Some(1.0));
    }

    #[test]
    fn unit_rejects_probabilities_and_always_saturates() {
        let u = UnitProvenance::new(ProvenanceConfig::new(SemiringKind::Unit));
        assert!(u.tag_of_input(&InputTag::default(), 3).is_ok());
        assert!(u.tag_of_input(&InputTag::prob(0.5), 3).is_err());
        assert!(u.saturated(&(), &()));
        assert_eq!(u.read_out(&()), ReadOut::default());
    }

    #[test]
    fn probabilities_are_range_checked() {
        assert!(mm().tag_of_input(&InputTag::prob(1.5), 0).is_err());
        assert!(am().tag_of_input(&InputTag::prob(-0.1), 0).is_err());
        assert_eq!(mm().tag_of_input(&InputTag::prob(0.97), 0).unwrap(), 0.97);
    }

    proptest! {
        #[test]
        fn max_min_is_a_semiring(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0) {
            let p = mm();
            prop_assert_eq!(p.oplus(&a, &b), p.oplus(&b, &a));
            prop_assert_eq!(p.oplus(&p.oplus(&a, &b), &c), p.oplus(&a, &p.oplus(&b, &c)));
            prop_assert_eq!(p.otimes(&p.otimes(&a, &b), &c), p.otimes(&a, &p.otimes(&b, &c)));
            prop_assert_eq!(p.oplus(&a, &p.zero()), a);
            prop_assert_eq!(p.otimes(&a, &p.one()), a);
            prop_assert_eq!(p.otimes(&a, &p.zero()), p.zero());
        }

        // Exact on dyadic rationals, where float addition and
        // multiplication of small operands are exact.
        #[test]
        fn add_mult_is_a_semiring(a in 0u32..=64, b in 0u32..=64, c in 0u32..=64) {
            let (a, b, c) = (a as f64 / 64.0, b as f64 / 64.0, c as f64 / 64.0);
            let p = am();
            prop_assert_eq!(p.oplus(&a, &b), p.oplus(&b, &a));
            prop_assert_eq!(p.oplus(&p.oplus(&a, &b), &c), p.oplus(&a, &p.oplus(&b, &c)));
            prop_assert_eq!(p.otimes(&p.otimes(&a, &b), &c), p.otimes(&a, &p.otimes(&b, &c)));
            prop_assert_eq!(p.oplus(&a, &p.zero()), a);
            prop_assert_eq!(p.otimes(&a, &p.one()), a);
            prop_assert_eq!(p.otimes(&a, &p.zero()), p.zero());
        }
    }
}
