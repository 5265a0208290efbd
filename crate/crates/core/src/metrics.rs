//! Mode discovery, top-K reward statistics and empirical regret.

use std::collections::HashSet;
use std::hash::Hash;

use serde::Serialize;

use crate::bandit::top_k;
use crate::env::{Environment, SuperArm};
use crate::error::{Error, Result};

/// Modes found so far, each recorded once with the epoch of its first hit.
#[derive(Debug, Clone)]
pub struct ModeLedger<S> {
    exemplars: Vec<S>,
    ids: HashSet<u64>,
    hits: Vec<(u64, u64)>,
}

impl<S> Default for ModeLedger<S> {
    fn default() -> Self {
        Self { exemplars: Vec::new(), ids: HashSet::new(), hits: Vec::new() }
    }
}

impl<S: Clone> ModeLedger<S> {
    /// Applies the environment's mode rule to `x`; returns whether a new
    /// mode was recorded.
    pub fn record<E: Environment<State = S>>(&mut self, env: &E, x: &S, epoch: u64) -> bool {
        match env.mode_of(x, &self.exemplars) {
            Some(id) if self.ids.insert(id) => {
                self.exemplars.push(x.clone());
                self.hits.push((id, epoch));
                true
            }
            _ => false,
        }
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// `(mode id, first-hit epoch)` in discovery order.
    pub fn hits(&self) -> &[(u64, u64)] {
        &self.hits
    }

    pub fn exemplars(&self) -> &[S] {
        &self.exemplars
    }

    pub fn contains(&self, id: u64) -> bool {
        self.ids.contains(&id)
    }
}

/// Distinct candidates with the highest rewards seen so far.
#[derive(Debug, Clone)]
pub struct TopKTracker<S> {
    capacity: usize,
    entries: Vec<(S, f64)>,
    members: HashSet<S>,
}

impl<S: Clone + Eq + Hash> TopKTracker<S> {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: Vec::with_capacity(capacity + 1), members: HashSet::new() }
    }

    pub fn insert(&mut self, x: &S, reward: f64) {
        if self.capacity == 0 || self.members.contains(x) {
            return;
        }
        if self.entries.len() == self.capacity && reward <= self.entries[self.capacity - 1].1 {
            return;
        }
        let pos = self.entries.partition_point(|e| e.1 >= reward);
        self.entries.insert(pos, (x.clone(), reward));
        self.members.insert(x.clone());
        if self.entries.len() > self.capacity {
            let (dropped, _) = self.entries.pop().expect("over capacity");
            self.members.remove(&dropped);
        }
    }

    /// Entries sorted by reward, best first.
    pub fn entries(&self) -> &[(S, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.capacity > 0 && self.entries.len() == self.capacity
    }

    /// Mean reward of the tracked set; `None` until `capacity` distinct
    /// candidates have been seen, after which it never decreases.
    pub fn mean_reward(&self) -> Option<f64> {
        self.is_full().then(|| self.entries.iter().map(|e| e.1).sum::<f64>() / self.entries.len() as f64)
    }
}

/// Mean pairwise similarity over the tracked candidates.
pub fn topk_similarity<E: Environment>(env: &E, tracker: &TopKTracker<E::State>) -> Result<f64> {
    let xs = tracker.entries();
    if xs.len() < 2 {
        return Err(Error::TooFew);
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            total += env.similarity(&xs[i].0, &xs[j].0);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Empirical cumulative regret against the best `K` windowed means.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RegretTracker {
    k: usize,
    terms: Vec<f64>,
    cumulative: f64,
}

impl RegretTracker {
    pub fn new(k: usize) -> Self {
        Self { k, terms: Vec::new(), cumulative: 0.0 }
    }

    /// Per-epoch term `mean(μ̂ over the empirical best K) - mean(μ̂ over 𝕊)`,
    /// clamped at zero.
    pub fn term(means: &[f64], k: usize, chosen: &SuperArm) -> f64 {
        let avg = |ids: &[usize]| ids.iter().map(|&i| means[i]).sum::<f64>() / ids.len() as f64;
        let best = avg(&top_k(means, k));
        let all: Vec<usize>;
        let members = match chosen.members() {
            Some(m) => m,
            None => {
                all = (0..means.len()).collect();
                &all
            }
        };
        (best - avg(members)).max(0.0)
    }

    pub fn update(&mut self, means: &[f64], chosen: &SuperArm) -> f64 {
        let term = Self::term(means, self.k, chosen);
        self.terms.push(term);
        self.cumulative += term;
        term
    }

    pub fn terms(&self) -> &[f64] {
        &self.terms
    }

    pub fn cumulative(&self) -> f64 {
        self.cumulative
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::fragment::{FragmentConfig, FragmentEnv, FragmentState};
    use crate::env::{BitSeqConfig, BitSeqEnv};

    fn bitseq() -> BitSeqEnv {
        BitSeqEnv::new(BitSeqConfig { n: 8, k: 4, modes: vec!["00000000".into(), "11111111".into()], delta: 1 })
            .unwrap()
    }

    #[test]
    fn duplicate_modes_count_once() {
        let e = bitseq();
        let mut l = ModeLedger::default();
        let x = e.parse("00000000").unwrap();
        assert!(l.record(&e, &x, 0));
        assert!(!l.record(&e, &x, 1));
        assert!(!l.record(&e, &e.parse("01010101").unwrap(), 1));
        assert!(l.record(&e, &e.parse("11111111").unwrap(), 3));
        assert_eq!(l.hits(), &[(0, 0), (1, 3)]);
    }

    #[test]
    fn topk_keeps_best_distinct() {
        let mut t = TopKTracker::new(2);
        t.insert(&"a", 5.0);
        assert_eq!(t.mean_reward(), None);
        t.insert(&"b", 7.0);
        t.insert(&"c", 6.0);
        t.insert(&"b", 7.0);
        let r: Vec<f64> = t.entries().iter().map(|e| e.1).collect();
        assert_eq!(r, vec![7.0, 6.0]);
        assert_eq!(t.mean_reward(), Some(6.5));
        t.insert(&"a", 5.0);
        assert_eq!(t.len(), 2);
    }

    fn frag() -> FragmentEnv {
        let v = 4;
        FragmentEnv::new(FragmentConfig {
            vocab: v,
            max_blocks: 3,
            stems: vec![2; v],
            scores: vec![0.0; v],
            interactions: vec![0.0; v * v],
            reward_low: 0.0,
            reward_high: 10.0,
            mode_threshold: 1.0,
            similarity_threshold: 0.7,
        })
        .unwrap()
    }

    fn chain(blocks: &[u16]) -> FragmentState {
        FragmentState::from_nodes(blocks.iter().enumerate().map(|(i, &b)| (vec![0u8; i], b)))
    }

    #[test]
    fn similarity_of_topk() {
        let e = frag();
        let mut t = TopKTracker::new(10);
        t.insert(&chain(&[0, 1]), 3.0);
        t.insert(&chain(&[0, 2]), 2.0);
        t.insert(&chain(&[2, 3]), 1.0);
        let s = topk_similarity(&e, &t).unwrap();
        assert!((s - 2.0 / 9.0).abs() < 1e-12, "{s}");
        let mut one = TopKTracker::new(3);
        one.insert(&chain(&[1]), 1.0);
        assert!(matches!(topk_similarity(&e, &one), Err(Error::TooFew)));
    }

    #[test]
    fn near_duplicate_fragment_is_not_a_new_mode() {
        let e = frag();
        let mut l = ModeLedger::default();
        // five shared blocks of six: Jaccard 5/7 ~ 0.714 > 0.7
        let big = FragmentEnv::new(FragmentConfig { max_blocks: 6, ..e.config().clone() }).unwrap();
        assert!(l.record(&big, &chain(&[0, 0, 0, 1, 1, 2]), 0));
        let near = chain(&[0, 0, 0, 1, 1, 3]);
        assert!((big.similarity(&near, &l.exemplars()[0]) - 5.0 / 7.0).abs() < 1e-12);
        assert!(!l.record(&big, &near, 1));
        assert!(l.record(&big, &chain(&[3, 3, 3, 2, 2, 2]), 1));
    }

    #[test]
    fn regret_hand_value() {
        let mut r = RegretTracker::new(2);
        let t = r.update(&[0.9, 0.5, 0.1], &SuperArm::subset(vec![1, 2]));
        assert!((t - 0.4).abs() < 1e-12);
        assert_eq!(r.update(&[0.9, 0.5, 0.1], &SuperArm::subset(vec![0, 1])), 0.0);
        assert!((r.cumulative() - 0.4).abs() < 1e-12);
    }
}
