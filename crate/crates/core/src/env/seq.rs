//! Prepend-append sequence design.
//!
//! Tokens are added at either end of a growing string until it reaches
//! length `L`. The empty string only admits appends, so every string of
//! length one has a single incoming edge and longer strings have exactly two
//! (drop the first token, drop the last token). Two edges may lead to the
//! same parent (`"AA"`); edges, not parent states, carry the backward
//! probability.
//!
//! The reward is a synthetic peak landscape:
//! `scale * exp(-min_p hamming(x, p))`.

use rand::Rng as _;

use super::artifact;
use super::distance::hamming;
use super::{Action, Environment};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const TOKENS: &[u8] = b"ACGUBDEFHIJKLMNOPQRSTVWXYZ";

pub const PREPEND: u32 = 0;
pub const APPEND: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SeqDesignConfig {
    pub alphabet: usize,
    pub length: usize,
    pub peaks: Vec<String>,
    pub scale: f64,
    /// Hamming radius of the mode ball around each peak.
    pub mode_radius: usize,
}

impl SeqDesignConfig {
    pub fn random_peaks(alphabet: usize, length: usize, num_peaks: usize, scale: f64, rng: &mut Rng) -> Result<Self> {
        if (num_peaks as f64) > (alphabet as f64).powi(length as i32) {
            return Err(Error::Config("more peaks than strings".into()));
        }
        let mut peaks: Vec<String> = Vec::with_capacity(num_peaks);
        while peaks.len() < num_peaks {
            let p: String = (0..length).map(|_| TOKENS[rng.gen_range(0..alphabet)] as char).collect();
            if !peaks.contains(&p) {
                peaks.push(p);
            }
        }
        let cfg = Self { alphabet, length, peaks, scale, mode_radius: 1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet == 0 || self.alphabet > TOKENS.len() {
            return Err(Error::Config(format!("alphabet size must be in 1..={}", TOKENS.len())));
        }
        if self.length == 0 {
            return Err(Error::Config("sequence length must be >= 1".into()));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Config("reward scale must be positive".into()));
        }
        if self.peaks.is_empty() {
            return Err(Error::Config("peak set is empty".into()));
        }
        let table = &TOKENS[..self.alphabet];
        for p in &self.peaks {
            if p.len() != self.length || p.bytes().any(|b| !table.contains(&b)) {
                return Err(Error::Config(format!("peak {p:?} is malformed")));
            }
        }
        Ok(())
    }
}

/// Token indices of the current string.
pub type SeqState = Vec<u8>;

#[derive(Debug, Clone)]
pub struct SeqEnv {
    cfg: SeqDesignConfig,
    peaks: Vec<Vec<u8>>,
}

impl SeqEnv {
    pub fn new(cfg: SeqDesignConfig) -> Result<Self> {
        cfg.validate()?;
        let peaks = cfg.peaks.iter().map(|p| Self::tokens_of(p)).collect();
        Ok(Self { cfg, peaks })
    }

    pub fn config(&self) -> &SeqDesignConfig {
        &self.cfg
    }

    fn tokens_of(s: &str) -> Vec<u8> {
        s.bytes().map(|b| TOKENS.iter().position(|&t| t == b).unwrap_or(usize::MAX) as u8).collect()
    }

    /// State from a token string such as `"GAC"`.
    pub fn parse(&self, s: &str) -> Result<SeqState> {
        let toks = Self::tokens_of(s);
        if toks.iter().any(|&t| t as usize >= self.cfg.alphabet) || s.len() > self.cfg.length {
            return Err(Error::InvalidAction(s.to_string()));
        }
        Ok(toks)
    }

    pub fn min_hamming(&self, x: &SeqState) -> Result<usize> {
        if x.len() != self.cfg.length {
            return Err(Error::LengthMismatch { expected: self.cfg.length, got: x.len() });
        }
        Ok(self.peaks.iter().map(|p| hamming(x, p)).min().expect("peaks"))
    }

    pub fn from_artifact(text: &str) -> Result<Self> {
        let map = artifact::parse(text)?;
        if artifact::get(&map, "kind")? != "seq" {
            return Err(Error::Artifact("not a seq artifact".into()));
        }
        let count: usize = artifact::get_parsed(&map, "peaks")?;
        let peaks =
            (0..count).map(|i| artifact::get(&map, &format!("peak.{i}")).map(str::to_string)).collect::<Result<_>>()?;
        Self::new(SeqDesignConfig {
            alphabet: artifact::get_parsed(&map, "alphabet")?,
            length: artifact::get_parsed(&map, "length")?,
            scale: artifact::get_parsed(&map, "scale")?,
            mode_radius: artifact::get_parsed(&map, "mode_radius")?,
            peaks,
        })
    }
}

impl Environment for SeqEnv {
    type State = SeqState;

    fn name(&self) -> &'static str {
        "seq"
    }

    fn alphabet_size(&self) -> usize {
        self.cfg.alphabet
    }

    fn initial_state(&self) -> SeqState {
        Vec::new()
    }

    fn is_terminal(&self, state: &SeqState) -> bool {
        state.len() >= self.cfg.length
    }

    fn legal_actions(&self, state: &SeqState) -> Vec<Action> {
        if self.is_terminal(state) {
            return Vec::new();
        }
        let a = self.cfg.alphabet as u32;
        if state.is_empty() {
            (0..a).map(|c| Action::new(APPEND, c)).collect()
        } else {
            [PREPEND, APPEND].into_iter().flat_map(|l| (0..a).map(move |c| Action::new(l, c))).collect()
        }
    }

    fn apply(&self, state: &SeqState, action: Action) -> Result<SeqState> {
        let ok = !self.is_terminal(state)
            && (action.choice as usize) < self.cfg.alphabet
            && (action.locator == APPEND || (action.locator == PREPEND && !state.is_empty()));
        if !ok {
            return Err(Error::InvalidAction(format!("{action:?}")));
        }
        let c = action.choice as u8;
        let mut next = Vec::with_capacity(state.len() + 1);
        if action.locator == PREPEND {
            next.push(c);
            next.extend_from_slice(state);
        } else {
            next.extend_from_slice(state);
            next.push(c);
        }
        Ok(next)
    }

    fn parent_count(&self, state: &SeqState) -> usize {
        state.len().min(2)
    }

    fn reward(&self, state: &SeqState) -> Result<f64> {
        Ok(self.cfg.scale * (-(self.min_hamming(state)? as f64)).exp())
    }

    fn feature_dim(&self) -> usize {
        self.cfg.length * (self.cfg.alphabet + 1)
    }

    fn encode(&self, state: &SeqState, out: &mut [f64]) {
        out.fill(0.0);
        let stride = self.cfg.alphabet + 1;
        for p in 0..self.cfg.length {
            let idx = state.get(p).map_or(0, |&t| t as usize + 1);
            out[p * stride + idx] = 1.0;
        }
    }

    fn output_dim(&self) -> usize {
        2 * self.cfg.alphabet
    }

    fn output_index(&self, _state: &SeqState, action: Action) -> usize {
        action.locator as usize * self.cfg.alphabet + action.choice as usize
    }

    fn horizon(&self) -> usize {
        self.cfg.length
    }

    fn mode_of(&self, x: &SeqState, _found: &[SeqState]) -> Option<u64> {
        if x.len() != self.cfg.length {
            return None;
        }
        self.peaks.iter().position(|p| hamming(x, p) <= self.cfg.mode_radius).map(|i| i as u64)
    }

    fn similarity(&self, a: &SeqState, b: &SeqState) -> f64 {
        let len = a.len().max(b.len()).max(1);
        1.0 - hamming(a, b) as f64 / len as f64
    }

    fn render(&self, state: &SeqState) -> String {
        state.iter().map(|&t| TOKENS[t as usize] as char).collect()
    }

    fn artifact(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("kind".into(), "seq".into()),
            ("alphabet".into(), self.cfg.alphabet.to_string()),
            ("length".into(), self.cfg.length.to_string()),
            ("scale".into(), format!("{:?}", self.cfg.scale)),
            ("mode_radius".into(), self.cfg.mode_radius.to_string()),
            ("peaks".into(), self.cfg.peaks.len().to_string()),
        ];
        for (i, p) in self.cfg.peaks.iter().enumerate() {
            out.push((format!("peak.{i}"), p.clone()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::enumerate_states;

    fn env(alphabet: usize, length: usize, peaks: &[&str]) -> SeqEnv {
        SeqEnv::new(SeqDesignConfig {
            alphabet,
            length,
            peaks: peaks.iter().map(|s| s.to_string()).collect(),
            scale: 1.0,
            mode_radius: 1,
        })
        .unwrap()
    }

    #[test]
    fn prepend_and_append() {
        let e = env(4, 4, &["ACGU"]);
        let s = e.parse("AC").unwrap();
        let g = e.apply(&s, Action::new(PREPEND, 2)).unwrap();
        assert_eq!(e.render(&g), "GAC");
        let u = e.apply(&s, Action::new(APPEND, 3)).unwrap();
        assert_eq!(e.render(&u), "ACU");
        assert!(e.apply(&e.initial_state(), Action::new(PREPEND, 0)).is_err());
    }

    #[test]
    fn exhaustive_rewards_on_binary_pairs() {
        let e = env(2, 2, &["AA"]);
        let one = (-1.0f64).exp();
        let two = (-2.0f64).exp();
        for (s, r) in [("AA", 1.0), ("AC", one), ("CA", one), ("CC", two)] {
            assert_eq!(e.reward(&e.parse(s).unwrap()).unwrap(), r);
        }
        assert!(matches!(e.reward(&e.parse("A").unwrap()), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn terminal_count_matches_closed_form() {
        for (a, l) in [(2, 3), (2, 5), (3, 3), (4, 4)] {
            let e = env(a, l, &[&"A".repeat(l)]);
            let space = enumerate_states(&e, 1 << 20).unwrap();
            assert_eq!(space.terminal.len(), a.pow(l as u32));
        }
    }

    #[test]
    fn parent_counts() {
        let e = env(4, 6, &["AAAAAA"]);
        assert_eq!(e.parent_count(&e.parse("G").unwrap()), 1);
        assert_eq!(e.parent_count(&e.parse("GAC").unwrap()), 2);
        assert_eq!(e.parent_count(&e.parse("AA").unwrap()), 2);
    }

    #[test]
    fn hamming_ball_modes() {
        let e = env(4, 4, &["AAAA", "CCCC"]);
        assert_eq!(e.mode_of(&e.parse("AAAG").unwrap(), &[]), Some(0));
        assert_eq!(e.mode_of(&e.parse("CCCC").unwrap(), &[]), Some(1));
        assert_eq!(e.mode_of(&e.parse("AAGG").unwrap(), &[]), None);
    }

    #[test]
    fn peak_relabeling_invariance() {
        let a = env(4, 3, &["ACG", "UUU", "GGA"]);
        let b = env(4, 3, &["GGA", "ACG", "UUU"]);
        for s in ["ACG", "AAA", "GGU", "CUC"] {
            let x = a.parse(s).unwrap();
            assert_eq!(a.reward(&x).unwrap(), b.reward(&x).unwrap());
        }
    }

    #[test]
    fn artifact_round_trip() {
        let mut rng = crate::rng::stream(3, "env", 0, 0);
        let cfg = SeqDesignConfig::random_peaks(4, 8, 20, 1.5, &mut rng).unwrap();
        let e = SeqEnv::new(cfg).unwrap();
        let back = SeqEnv::from_artifact(&artifact::write(&e.artifact())).unwrap();
        assert_eq!(back.config(), e.config());
    }
}
