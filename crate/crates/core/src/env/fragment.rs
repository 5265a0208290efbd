//! Fragment assembly on a rooted tree of building blocks.
//!
//! Every block type has 1-3 stems. The first action places the root block;
//! afterwards an action attaches a block to an open stem (the locator is the
//! stem's rank among open stems in canonical path order). A non-root block
//! spends one stem on its parent. Assembly ends at `max_blocks` blocks or
//! when no stem is open.
//!
//! A state is the map from stem path (child indices from the root) to block
//! type, so different attachment orders meet in the same state and the state
//! graph is a DAG. The parents of a state are its removable leaves.
//!
//! The reward oracle is synthetic: a logistic transform of additive block
//! scores plus pairwise interaction scores over attached (parent, child)
//! pairs, scaled into `[reward_low, reward_high]`.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::artifact;
use super::distance::jaccard_multiset;
use super::{Action, Environment};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentConfig {
    pub vocab: usize,
    pub max_blocks: usize,
    pub stems: Vec<u8>,
    pub scores: Vec<f64>,
    /// Row-major `vocab x vocab`, symmetric.
    pub interactions: Vec<f64>,
    pub reward_low: f64,
    pub reward_high: f64,
    /// Candidates above this reward are mode candidates.
    pub mode_threshold: f64,
    /// A new mode must have similarity at most this to every recorded mode.
    pub similarity_threshold: f64,
}

/// Parameters of the seeded synthetic reward table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FragmentSynth {
    pub vocab: usize,
    pub max_blocks: usize,
    /// Number of planted high-scoring block types.
    pub num_good: usize,
    pub good_score: f64,
    pub bad_score: f64,
    pub score_noise: f64,
    /// Probability that a block pair carries a non-zero interaction.
    pub interaction_density: f64,
    pub interaction_scale: f64,
    pub reward_low: f64,
    pub reward_high: f64,
    pub mode_threshold: f64,
    pub similarity_threshold: f64,
}

impl Default for FragmentSynth {
    fn default() -> Self {
        Self {
            vocab: 32,
            max_blocks: 8,
            num_good: 8,
            good_score: 0.6,
            bad_score: -0.6,
            score_noise: 0.3,
            interaction_density: 0.3,
            interaction_scale: 0.5,
            reward_low: 0.0,
            reward_high: 10.0,
            mode_threshold: 7.5,
            similarity_threshold: 0.7,
        }
    }
}

impl FragmentConfig {
    /// Draws a planted table: `num_good` random block types score high and
    /// interact positively with each other; interactions touching any other
    /// block are non-positive.
    pub fn synthetic(synth: &FragmentSynth, rng: &mut Rng) -> Result<Self> {
        let v = synth.vocab;
        if synth.num_good > v {
            return Err(Error::Config("num_good exceeds vocabulary".into()));
        }
        let mut good = vec![false; v];
        for i in sample(rng, v, synth.num_good).into_iter() {
            good[i] = true;
        }
        let stems = (0..v).map(|_| rng.gen_range(1..=3u8)).collect();
        let scores = (0..v)
            .map(|i| {
                let base = if good[i] { synth.good_score } else { synth.bad_score };
                base + synth.score_noise * rng.gen_range(-1.0..=1.0)
            })
            .collect();
        let mut interactions = vec![0.0; v * v];
        for i in 0..v {
            for j in i..v {
                if rng.gen::<f64>() < synth.interaction_density {
                    let mag = synth.interaction_scale * rng.gen::<f64>();
                    let w = if good[i] && good[j] { mag } else { -mag };
                    interactions[i * v + j] = w;
                    interactions[j * v + i] = w;
                }
            }
        }
        let cfg = Self {
            vocab: v,
            max_blocks: synth.max_blocks,
            stems,
            scores,
            interactions,
            reward_low: synth.reward_low,
            reward_high: synth.reward_high,
            mode_threshold: synth.mode_threshold,
            similarity_threshold: synth.similarity_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.vocab;
        if v == 0 || v > u16::MAX as usize {
            return Err(Error::Config("fragment vocabulary must be non-empty".into()));
        }
        if self.max_blocks == 0 || self.max_blocks > 64 {
            return Err(Error::Config("max_blocks must be in 1..=64".into()));
        }
        if self.stems.len() != v || self.stems.iter().any(|&s| !(1..=3).contains(&s)) {
            return Err(Error::Config("every block needs 1-3 stems".into()));
        }
        if self.scores.len() != v || self.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("block scores must be finite".into()));
        }
        if self.interactions.len() != v * v || self.interactions.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("interaction table must be finite and vocab x vocab".into()));
        }
        for i in 0..v {
            for j in 0..i {
                if self.interactions[i * v + j] != self.interactions[j * v + i] {
                    return Err(Error::Config("interaction table is not symmetric".into()));
                }
            }
        }
        if !(self.reward_low >= 0.0 && self.reward_high > self.reward_low && self.reward_high.is_finite()) {
            return Err(Error::Config("reward range must satisfy 0 <= low < high".into()));
        }
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::Config("similarity threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn interaction(&self, a: u16, b: u16) -> f64 {
        self.interactions[a as usize * self.vocab + b as usize]
    }
}

/// Stem path from the root to block type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FragmentState {
    nodes: BTreeMap<Vec<u8>, u16>,
}

impl FragmentState {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Block types, in canonical node order.
    pub fn blocks(&self) -> Vec<u16> {
        self.nodes.values().copied().collect()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&Vec<u8>, &u16)> {
        self.nodes.iter()
    }

    /// Builds a state from `(path, block)` pairs; paths must form a tree.
    pub fn from_nodes<I: IntoIterator<Item = (Vec<u8>, u16)>>(nodes: I) -> Self {
        Self { nodes: nodes.into_iter().collect() }
    }
}

#[derive(Debug, Clone)]
pub struct FragmentEnv {
    cfg: FragmentConfig,
    max_open: usize,
}

impl FragmentEnv {
    pub fn new(cfg: FragmentConfig) -> Result<Self> {
        cfg.validate()?;
        let max_stem = *cfg.stems.iter().max().expect("non-empty") as usize;
        let max_open = (max_stem + cfg.max_blocks.saturating_sub(2) * max_stem.saturating_sub(2)).max(1);
        Ok(Self { cfg, max_open })
    }

    pub fn config(&self) -> &FragmentConfig {
        &self.cfg
    }

    fn child_slots(&self, path: &[u8], block: u16) -> usize {
        let s = self.cfg.stems[block as usize] as usize;
        if path.is_empty() {
            s
        } else {
            s - 1
        }
    }

    /// Open stems in canonical (lexicographic path) order.
    pub fn open_stems(&self, state: &FragmentState) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        for (path, &b) in &state.nodes {
            for j in 0..self.child_slots(path, b) {
                let mut child = path.clone();
                child.push(j as u8);
                if !state.nodes.contains_key(&child) {
                    out.push(child);
                }
            }
        }
        out.sort();
        out
    }

    /// The raw logistic argument: block scores plus interactions on edges.
    pub fn score(&self, state: &FragmentState) -> f64 {
        let mut s = 0.0;
        for (path, &b) in &state.nodes {
            s += self.cfg.scores[b as usize];
            if let Some((_, parent)) = path.split_last() {
                let pb = state.nodes[parent];
                s += self.cfg.interaction(pb, b);
            }
        }
        s
    }

    pub fn from_artifact(text: &str) -> Result<Self> {
        let map = artifact::parse(text)?;
        if artifact::get(&map, "kind")? != "fragment" {
            return Err(Error::Artifact("not a fragment artifact".into()));
        }
        let vocab: usize = artifact::get_parsed(&map, "vocab")?;
        let mut stems = Vec::with_capacity(vocab);
        let mut scores = Vec::with_capacity(vocab);
        for i in 0..vocab {
            stems.push(artifact::get_parsed(&map, &format!("block.{i}.stems"))?);
            scores.push(artifact::get_parsed(&map, &format!("block.{i}.score"))?);
        }
        let mut interactions = vec![0.0; vocab * vocab];
        for (k, v) in map.range("pair.".to_string()..) {
            let Some(rest) = k.strip_prefix("pair.") else { break };
            let (i, j) = rest
                .split_once('.')
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
                .ok_or_else(|| Error::Artifact(format!("bad pair key {k}")))?;
            if i >= vocab || j >= vocab {
                return Err(Error::Artifact(format!("pair {k} out of range")));
            }
            let w: f64 = v.parse().map_err(|_| Error::Artifact(format!("bad value for {k}")))?;
            interactions[i * vocab + j] = w;
            interactions[j * vocab + i] = w;
        }
        Self::new(FragmentConfig {
            vocab,
            max_blocks: artifact::get_parsed(&map, "max_blocks")?,
            stems,
            scores,
            interactions,
            reward_low: artifact::get_parsed(&map, "reward_low")?,
            reward_high: artifact::get_parsed(&map, "reward_high")?,
            mode_threshold: artifact::get_parsed(&map, "mode_threshold")?,
            similarity_threshold: artifact::get_parsed(&map, "similarity_threshold")?,
        })
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Environment for FragmentEnv {
    type State = FragmentState;

    fn name(&self) -> &'static str {
        "fragment"
    }

    fn alphabet_size(&self) -> usize {
        self.cfg.vocab
    }

    fn initial_state(&self) -> FragmentState {
        FragmentState::default()
    }

    fn is_terminal(&self, state: &FragmentState) -> bool {
        !state.is_empty() && (state.len() >= self.cfg.max_blocks || self.open_stems(state).is_empty())
    }

    fn legal_actions(&self, state: &FragmentState) -> Vec<Action> {
        if self.is_terminal(state) {
            return Vec::new();
        }
        let v = self.cfg.vocab as u32;
        let slots = if state.is_empty() { 1 } else { self.open_stems(state).len() as u32 };
        (0..slots).flat_map(|l| (0..v).map(move |c| Action::new(l, c))).collect()
    }

    fn apply(&self, state: &FragmentState, action: Action) -> Result<FragmentState> {
        let bad = || Error::InvalidAction(format!("{action:?}"));
        if action.choice as usize >= self.cfg.vocab || self.is_terminal(state) {
            return Err(bad());
        }
        let path = if state.is_empty() {
            if action.locator != 0 {
                return Err(bad());
            }
            Vec::new()
        } else {
            self.open_stems(state).into_iter().nth(action.locator as usize).ok_or_else(bad)?
        };
        let mut next = state.clone();
        next.nodes.insert(path, action.choice as u16);
        Ok(next)
    }

    fn parent_count(&self, state: &FragmentState) -> usize {
        match state.len() {
            0 => 0,
            1 => 1,
            _ => {
                let keys: Vec<&Vec<u8>> = state.nodes.keys().collect();
                keys.iter()
                    .enumerate()
                    .filter(|(i, p)| !p.is_empty() && keys.get(i + 1).is_none_or(|next| !next.starts_with(p)))
                    .count()
            }
        }
    }

    fn reward(&self, state: &FragmentState) -> Result<f64> {
        if state.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let span = self.cfg.reward_high - self.cfg.reward_low;
        Ok(self.cfg.reward_low + span * logistic(self.score(state)))
    }

    fn feature_dim(&self) -> usize {
        self.cfg.max_blocks * self.cfg.vocab + self.max_open * self.cfg.max_blocks
    }

    fn encode(&self, state: &FragmentState, out: &mut [f64]) {
        out.fill(0.0);
        let v = self.cfg.vocab;
        let mb = self.cfg.max_blocks;
        let mut index: BTreeMap<&[u8], usize> = BTreeMap::new();
        for (i, (path, &b)) in state.nodes.iter().enumerate().take(mb) {
            out[i * v + b as usize] = 1.0;
            index.insert(path.as_slice(), i);
        }
        for (r, stem) in self.open_stems(state).iter().enumerate().take(self.max_open) {
            let parent = &stem[..stem.len() - 1];
            if let Some(&i) = index.get(parent) {
                out[mb * v + r * mb + i] = 1.0;
            }
        }
    }

    fn output_dim(&self) -> usize {
        self.max_open * self.cfg.vocab
    }

    fn output_index(&self, _state: &FragmentState, action: Action) -> usize {
        action.locator as usize * self.cfg.vocab + action.choice as usize
    }

    fn horizon(&self) -> usize {
        self.cfg.max_blocks
    }

    fn mode_of(&self, x: &FragmentState, found: &[FragmentState]) -> Option<u64> {
        let r = self.reward(x).ok()?;
        if r <= self.cfg.mode_threshold {
            return None;
        }
        let separated = found.iter().all(|m| self.similarity(x, m) <= self.cfg.similarity_threshold);
        separated.then_some(found.len() as u64)
    }

    fn similarity(&self, a: &FragmentState, b: &FragmentState) -> f64 {
        jaccard_multiset(&a.blocks(), &b.blocks())
    }

    fn render(&self, state: &FragmentState) -> String {
        state
            .nodes
            .iter()
            .map(|(p, b)| {
                let path: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                format!("{}:{b}", if p.is_empty() { "r".to_string() } else { path.join(".") })
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn artifact(&self) -> Vec<(String, String)> {
        let c = &self.cfg;
        let mut out = vec![
            ("kind".into(), "fragment".into()),
            ("vocab".into(), c.vocab.to_string()),
            ("max_blocks".into(), c.max_blocks.to_string()),
            ("reward_low".into(), format!("{:?}", c.reward_low)),
            ("reward_high".into(), format!("{:?}", c.reward_high)),
            ("mode_threshold".into(), format!("{:?}", c.mode_threshold)),
            ("similarity_threshold".into(), format!("{:?}", c.similarity_threshold)),
        ];
        for i in 0..c.vocab {
            out.push((format!("block.{i}.stems"), c.stems[i].to_string()));
            out.push((format!("block.{i}.score"), format!("{:?}", c.scores[i])));
        }
        for i in 0..c.vocab {
            for j in i..c.vocab {
                let w = c.interactions[i * c.vocab + j];
                if w != 0.0 {
                    out.push((format!("pair.{i}.{j}"), format!("{w:?}")));
                }
            }
        }
        out
    }
}
