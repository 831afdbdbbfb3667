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

//! Differentiable probability semirings over dual numbers.

use std::sync::Arc;

use smallvec::SmallVec;

use super::{
    check_prob, clamp01, prob_saturated, FactId, InputTag, Provenance, ProvenanceConfig,
    ProvenanceCounters, ProvenanceError, ReadOut, SemiringKind,
};

/// Sparse gradient sorted by fact id. Exact zeros are never stored.
pub type Gradient = SmallVec<[(FactId, f64); 4]>;

/// A probability with its partial derivatives by input fact.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTag {
    pub p: f64,
    pub grad: Gradient,
}

impl DualTag {
    pub fn constant(p: f64) -> Self {
        Self {
            p,
            grad: Gradient::new(),
        }
    }
}

/// `a * sa + b * sb`, merged by fact id.
fn combine(a: &Gradient, sa: f64, b: &Gradient, sb: f64) -> Gradient {
    let mut out = Gradient::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let mut push = |id: FactId, v: f64| {
        if v != 0.0 {
            out.push((id, v));
        }
    };
    while i < a.len() && j < b.len() {
        let (ia, va) = a[i];
        let (ib, vb) = b[j];
        if ia < ib {
            push(ia, va * sa);
            i += 1;
        } else if ib < ia {
            push(ib, vb * sb);
            j += 1;
        } else {
            push(ia, va * sa + vb * sb);
            i += 1;
            j += 1;
        }
    }
    for &(id, v) in &a[i..] {
        push(id, v * sa);
    }
    for &(id, v) in &b[j..] {
        push(id, v * sb);
    }
    out
}

/// Keeps the `cap` largest-magnitude entries, preserving id order.
fn enforce_cap(grad: &mut Gradient, cap: usize, counters: &ProvenanceCounters) {
    if grad.len() <= cap {
        return;
    }
    let mut order: Vec<usize> = (0..grad.len()).collect();
    order.sort_by(|&x, &y| grad[y].1.abs().total_cmp(&grad[x].1.abs()).then(x.cmp(&y)));
    let mut keep = vec![false; grad.len()];
    for &k in &order[..cap] {
        keep[k] = true;
    }
    let dropped = (grad.len() - cap) as u64;
    let mut idx = 0;
    grad.retain(|_| {
        let k = keep[idx];
        idx += 1;
        k
    });
    ProvenanceCounters::bump(&counters.gradient_entries_dropped, dropped);
}

fn encode_dual(t: &DualTag, cap: usize, out: &mut Vec<u8>) {
    out.extend_from_slice(&t.p.to_le_bytes());
    out.extend_from_slice(&(t.grad.len() as u32).to_le_bytes());
    for &(id, v) in &t.grad {
        out.extend_from_slice(&id.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.resize(out.len() + (cap - t.grad.len()) * 12, 0);
}

fn input_dual(input: &InputTag, fact: FactId) -> Result<DualTag, ProvenanceError> {
    let p = check_prob(input, fact)?;
    let mut grad = Gradient::new();
    grad.push((fact, 1.0));
    Ok(DualTag { p, grad })
}

/// Max-min-prob carrying the gradient of the selected operand.
#[derive(Debug, Clone)]
pub struct DiffMaxMinProb {
    cfg: ProvenanceConfig,
    counters: Arc<ProvenanceCounters>,
}

impl DiffMaxMinProb {
    pub fn new(cfg: ProvenanceConfig) -> Self {
        debug_assert_eq!(cfg.kind, SemiringKind::DiffMaxMinProb);
        Self {
            cfg,
            counters: Arc::default(),
        }
    }
}

impl Provenance for DiffMaxMinProb {
    type Tag = DualTag;

    fn config(&self) -> &ProvenanceConfig {
        &self.cfg
    }

    fn counters(&self) -> &Arc<ProvenanceCounters> {
        &self.counters
    }

    fn zero(&self) -> DualTag {
        DualTag::constant(0.0)
    }

    fn one(&self) -> DualTag {
        DualTag::constant(1.0)
    }

    fn oplus(&self, a: &DualTag, b: &DualTag) -> DualTag {
        if b.p > a.p {
            b.clone()
        } else {
            a.clone()
        }
    }

    fn otimes(&self, a: &DualTag, b: &DualTag) -> DualTag {
        if b.p < a.p {
            b.clone()
        } else {
            a.clone()
        }
    }

    fn discard(&self, t: &DualTag) -> bool {
        t.p <= 0.0
    }

    fn saturated(&self, old: &DualTag, new: &DualTag) -> bool {
        prob_saturated(self.cfg.saturation_epsilon, old.p, self.oplus(old, new).p)
    }

    fn tag_of_input(&self, input: &InputTag, fact: FactId) -> Result<DualTag, ProvenanceError> {
        input_dual(input, fact)
    }

    fn read_out(&self, t: &DualTag) -> ReadOut {
        ReadOut {
            probability: Some(clamp01(t.p)),
            gradient: Some(t.grad.to_vec()),
            proof: None,
        }
    }

    fn tag_byte_size(&self) -> usize {
        12 + self.cfg.proof_cap * 12
    }

    fn encode_tag(&self, t: &DualTag, out: &mut Vec<u8>) {
        encode_dual(t, self.cfg.proof_cap, out);
    }
}

/// Add-mult-prob with forward-mode derivatives (sum and product rules).
#[derive(Debug, Clone)]
pub struct DiffAddMultProb {
    cfg: ProvenanceConfig,
    counters: Arc<ProvenanceCounters>,
}

impl DiffAddMultProb {
    pub fn new(cfg: ProvenanceConfig) -> Self {
        debug_assert_eq!(cfg.kind, SemiringKind::DiffAddMultProb);
        Self {
            cfg,
            counters: Arc::default(),
        }
    }
}

impl Provenance for DiffAddMultProb {
    type Tag = DualTag;

    fn config(&self) -> &ProvenanceConfig {
        &self.cfg
    }

    fn counters(&self) -> &Arc<ProvenanceCounters> {
        &self.counters
    }

    fn zero(&self) -> DualTag {
        DualTag::constant(0.0)
    }

    fn one(&self) -> DualTag {
        DualTag::constant(1.0)
    }

    fn oplus(&self, a: &DualTag, b: &DualTag) -> DualTag {
        let mut grad = combine(&a.grad, 1.0, &b.grad, 1.0);
        enforce_cap(&mut grad, self.cfg.proof_cap, &self.counters);
        DualTag { p: a.p + b.p, grad }
    }

    fn otimes(&self, a: &DualTag, b: &DualTag) -> DualTag {
        let mut grad = combine(&a.grad, b.p, &b.grad, a.p);
        enforce_cap(&mut grad, self.cfg.proof_cap, &self.counters);
        DualTag { p: a.p * b.p, grad }
    }

    fn discard(&self, t: &DualTag) -> bool {
        t.p <= 0.0
    }

    fn saturated(&self, old: &DualTag, new: &DualTag) -> bool {
        prob_saturated(self.cfg.saturation_epsilon, old.p, old.p + new.p)
    }

    fn tag_of_input(&self, input: &InputTag, fact: FactId) -> Result<DualTag, ProvenanceError> {
        input_dual(input, fact)
    }

    // the clamp is flat outside [0, 1], so its derivative vanishes there
    fn read_out(&self, t: &DualTag) -> ReadOut {
        let clamped = !(0.0..=1.0).contains(&t.p);
        ReadOut {
            probability: Some(clamp01(t.p)),
            gradient: Some(if clamped { Vec::new() } else { t.grad.to_vec() }),
            proof: None,
        }
    }

    fn tag_byte_size(&self) -> usize {
        12 + self.cfg.proof_cap * 12
    }

    fn encode_tag(&self, t: &DualTag, out: &mut Vec<u8>) {
        encode_dual(t, self.cfg.proof_cap, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dam() -> DiffAddMultProb {
        DiffAddMultProb::new(ProvenanceConfig::new(SemiringKind::DiffAddMultProb))
    }

    fn dmm() -> DiffMaxMinProb {
        DiffMaxMinProb::new(ProvenanceConfig::new(SemiringKind::DiffMaxMinProb))
    }

    fn input(p: f64, id: FactId) -> DualTag {
        input_dual(&InputTag::prob(p), id).unwrap()
    }

    #[test]
    fn input_tags_seed_unit_gradient() {
        let t = dam().tag_of_input(&InputTag::prob(0.97), 0).unwrap();
        assert_eq!(t.p, 0.97);
        assert_eq!(t.grad.as_slice(), &[(0, 1.0)]);
    }

    #[test]
    fn product_rule() {
        let (p1, p2) = (0.3, 0.6);
        let t = dam().otimes(&input(p1, 1), &input(p2, 2));
        assert_eq!(t.p, p1 * p2);
        assert_eq!(t.grad.as_slice(), &[(1, p2), (2, p1)]);
    }

    #[test]
    fn sum_rule_adds_gradients() {
        let a = input(0.3, 1);
        let b = input(0.4, 1);
        let t = dam().oplus(&a, &b);
        assert!((t.p - 0.7).abs() < 1e-15);
        assert_eq!(t.grad.as_slice(), &[(1, 2.0)]);
    }

    #[test]
    fn max_min_follow_the_selected_operand() {
        let p = dmm();
        let a = input(0.3, 1);
        let b = input(0.8, 2);
        assert_eq!(p.oplus(&a, &b), b);
        assert_eq!(p.otimes(&a, &b), a);
        // ties keep the left operand
        let c = input(0.3, 3);
        assert_eq!(p.oplus(&a, &c), a);
    }

    #[test]
    fn clamped_read_out_has_zero_gradient() {
        let p = dam();
        let t = p.oplus(&input(0.9, 0), &input(0.4, 1));
        let r = p.read_out(&t);
        assert_eq!(r.probability, Some(1.0));
        assert_eq!(r.gradient, Some(vec![]));
    }

    #[test]
    fn gradient_cap_drops_smallest_entries() {
        let cfg = ProvenanceConfig::new(SemiringKind::DiffAddMultProb).with_proof_cap(2);
        let p = DiffAddMultProb::new(cfg);
        let a = DualTag {
            p: 0.5,
            grad: [(0, 0.1), (1, 3.0)].into_iter().collect(),
        };
        let b = DualTag {
            p: 0.5,
            grad: [(2, 2.0)].into_iter().collect(),
        };
        let t = p.oplus(&a, &b);
        assert_eq!(t.grad.as_slice(), &[(1, 3.0), (2, 2.0)]);
        assert_eq!(p.counters().snapshot().gradient_entries_dropped, 1);
    }

    #[test]
    fn encoding_has_fixed_size() {
        let p = dam();
        let mut a = Vec::new();
        let mut b = Vec::new();
        p.encode_tag(&p.one(), &mut a);
        p.encode_tag(&p.otimes(&input(0.5, 1), &input(0.25, 7)), &mut b);
        assert_eq!(a.len(), p.tag_byte_size());
        assert_eq!(b.len(), p.tag_byte_size());
    }

    fn dyadic_dual() -> impl Strategy<Value = DualTag> {
        (1u32..=16, proptest::collection::btree_map(0u32..6, 1u32..=16, 0..4)).prop_map(|(p, g)| DualTag {
            p: p as f64 / 16.0,
            grad: g.into_iter().map(|(k, v)| (k, v as f64 / 16.0)).collect(),
        })
    }

    proptest! {
        #[test]
        fn diff_add_mult_semiring_laws(a in dyadic_dual(), b in dyadic_dual(), c in dyadic_dual()) {
            let p = dam();
            prop_assert_eq!(p.oplus(&a, &b), p.oplus(&b, &a));
            prop_assert_eq!(p.oplus(&p.oplus(&a, &b), &c), p.oplus(&a, &p.oplus(&b, &c)));
            prop_assert_eq!(p.otimes(&p.otimes(&a, &b), &c), p.otimes(&a, &p.otimes(&b, &c)));
            prop_assert_eq!(p.oplus(&a, &p.zero()), a.clone());
            prop_assert_eq!(p.otimes(&a, &p.one()), a.clone());
            prop_assert_eq!(p.otimes(&a, &p.zero()), p.zero());
        }

        #[test]
        fn diff_max_min_semiring_laws(a in dyadic_dual(), b in dyadic_dual(), c in dyadic_dual()) {
            let p = dmm();
            prop_assume!(a.p != b.p && b.p != c.p && a.p != c.p);
            prop_assert_eq!(p.oplus(&a, &b), p.oplus(&b, &a));
            prop_assert_eq!(p.oplus(&p.oplus(&a, &b), &c), p.oplus(&a, &p.oplus(&b, &c)));
            prop_assert_eq!(p.otimes(&p.otimes(&a, &b), &c), p.otimes(&a, &p.otimes(&b, &c)));
            prop_assert_eq!(p.oplus(&a, &p.zero()), a.clone());
            prop_assert_eq!(p.otimes(&a, &p.one()), a.clone());
            prop_assert_eq!(p.otimes(&a, &p.zero()), p.zero());
        }
    }
}
