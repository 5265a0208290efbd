//! Bit-sequence insertion MDP.
//!
//! A length-`n` bit string is split into `n / k` positions. Each action
//! writes a `k`-bit word into any unfilled position, so the state graph is a
//! DAG (every filled position could have been the last one written). The
//! reward is `exp(-min_m lev(x, m))` over a fixed mode set.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::artifact;
use super::distance::{hamming, levenshtein_slice};
use super::{Action, Environment};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Base patterns used to assemble the default mode set.
pub const DEFAULT_PATTERNS: [&str; 5] = ["00000000", "11111111", "11110000", "00001111", "00111100"];

#[derive(Debug, Clone, PartialEq)]
pub struct BitSeqConfig {
    pub n: usize,
    pub k: usize,
    pub modes: Vec<String>,
    /// A sample is a hit on mode `m` when `lev(x, m) < delta`.
    pub delta: usize,
}

impl BitSeqConfig {
    /// Mode set built from random concatenations of `patterns`.
    pub fn from_patterns(
        n: usize,
        k: usize,
        patterns: &[String],
        num_modes: usize,
        delta: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let plen = patterns.first().map(String::len).ok_or_else(|| Error::Config("no base patterns".into()))?;
        if plen == 0 || patterns.iter().any(|p| p.len() != plen) || !n.is_multiple_of(plen) {
            return Err(Error::Config("base patterns must share a length that divides n".into()));
        }
        let pieces = n / plen;
        let distinct = (patterns.len() as f64).powi(pieces as i32);
        if (num_modes as f64) > distinct {
            return Err(Error::Config(format!("cannot draw {num_modes} distinct modes from {distinct} combinations")));
        }
        let mut modes: Vec<String> = Vec::with_capacity(num_modes);
        while modes.len() < num_modes {
            let m: String = (0..pieces).map(|_| patterns.choose(rng).expect("non-empty").as_str()).collect();
            if !modes.contains(&m) {
                modes.push(m);
            }
        }
        let cfg = Self { n, k, modes, delta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > 12 || self.n == 0 || !self.n.is_multiple_of(self.k) {
            return Err(Error::Config(format!("bitseq needs 1 <= k <= 12 dividing n (n={}, k={})", self.n, self.k)));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("bitseq mode set is empty".into()));
        }
        for m in &self.modes {
            if m.len() != self.n || m.bytes().any(|b| b != b'0' && b != b'1') {
                return Err(Error::Config(format!("mode {m:?} is not a length-{} bit string", self.n)));
            }
        }
        Ok(())
    }
}

/// State: one optional word per position.
pub type BitSeqState = Vec<Option<u16>>;

#[derive(Debug, Clone)]
pub struct BitSeqEnv {
    cfg: BitSeqConfig,
    positions: usize,
    words: usize,
    modes: Vec<Vec<u8>>,
}

impl BitSeqEnv {
    pub fn new(cfg: BitSeqConfig) -> Result<Self> {
        cfg.validate()?;
        let modes = cfg.modes.iter().map(|m| m.bytes().collect()).collect();
        Ok(Self { positions: cfg.n / cfg.k, words: 1 << cfg.k, modes, cfg })
    }

    pub fn config(&self) -> &BitSeqConfig {
        &self.cfg
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    /// `k`-bit word `w`, most significant bit first.
    pub fn word_bits(&self, w: u16) -> String {
        (0..self.cfg.k).rev().map(|b| if (w >> b) & 1 == 1 { '1' } else { '0' }).collect()
    }

    pub fn word_id(&self, bits: &str) -> Option<u16> {
        if bits.len() != self.cfg.k {
            return None;
        }
        u16::from_str_radix(bits, 2).ok()
    }

    fn bits(&self, x: &BitSeqState) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.cfg.n);
        for w in x {
            let w = w.ok_or(Error::IncompleteState)?;
            out.extend(self.word_bits(w).bytes());
        }
        Ok(out)
    }

    /// State from a complete bit string.
    pub fn parse(&self, bits: &str) -> Result<BitSeqState> {
        if bits.len() != self.cfg.n {
            return Err(Error::LengthMismatch { expected: self.cfg.n, got: bits.len() });
        }
        (0..self.positions)
            .map(|p| {
                let chunk = &bits[p * self.cfg.k..(p + 1) * self.cfg.k];
                self.word_id(chunk).map(Some).ok_or_else(|| Error::InvalidAction(chunk.to_string()))
            })
            .collect()
    }

    /// `min_m lev(x, m)` over the mode set.
    pub fn min_distance(&self, x: &BitSeqState) -> Result<usize> {
        let bits = self.bits(x)?;
        Ok(self.modes.iter().map(|m| levenshtein_slice(&bits, m)).min().expect("non-empty mode set"))
    }

    pub fn from_artifact(text: &str) -> Result<Self> {
        let map = artifact::parse(text)?;
        if artifact::get(&map, "kind")? != "bitseq" {
            return Err(Error::Artifact("not a bitseq artifact".into()));
        }
        let count: usize = artifact::get_parsed(&map, "modes")?;
        let modes =
            (0..count).map(|i| artifact::get(&map, &format!("mode.{i}")).map(str::to_string)).collect::<Result<_>>()?;
        Self::new(BitSeqConfig {
            n: artifact::get_parsed(&map, "n")?,
            k: artifact::get_parsed(&map, "k")?,
            delta: artifact::get_parsed(&map, "delta")?,
            modes,
        })
    }
}

/// Random bit string, used by tests and the oracle bandit.
pub fn random_bits(n: usize, rng: &mut Rng) -> String {
    (0..n).map(|_| if rng.gen::<bool>() { '1' } else { '0' }).collect()
}

impl Environment for BitSeqEnv {
    type State = BitSeqState;

    fn name(&self) -> &'static str {
        "bitseq"
    }

    fn alphabet_size(&self) -> usize {
        self.words
    }

    fn initial_state(&self) -> BitSeqState {
        vec![None; self.positions]
    }

    fn is_terminal(&self, state: &BitSeqState) -> bool {
        state.iter().all(Option::is_some)
    }

    fn legal_actions(&self, state: &BitSeqState) -> Vec<Action> {
        let mut out = Vec::new();
        for (p, slot) in state.iter().enumerate() {
            if slot.is_none() {
                out.extend((0..self.words as u32).map(|w| Action::new(p as u32, w)));
            }
        }
        out
    }

    fn apply(&self, state: &BitSeqState, action: Action) -> Result<BitSeqState> {
        let p = action.locator as usize;
        if p >= self.positions || state[p].is_some() || action.choice as usize >= self.words {
            return Err(Error::InvalidAction(format!("{action:?}")));
        }
        let mut next = state.clone();
        next[p] = Some(action.choice as u16);
        Ok(next)
    }

    fn parent_count(&self, state: &BitSeqState) -> usize {
        state.iter().filter(|w| w.is_some()).count()
    }

    fn reward(&self, state: &BitSeqState) -> Result<f64> {
        Ok((-(self.min_distance(state)? as f64)).exp())
    }

    fn feature_dim(&self) -> usize {
        self.positions * (self.words + 1)
    }

    fn encode(&self, state: &BitSeqState, out: &mut [f64]) {
        out.fill(0.0);
        let stride = self.words + 1;
        for (p, w) in state.iter().enumerate() {
            let idx = match w {
                None => 0,
                Some(w) => *w as usize + 1,
            };
            out[p * stride + idx] = 1.0;
        }
    }

    fn output_dim(&self) -> usize {
        self.positions * self.words
    }

    fn output_index(&self, _state: &BitSeqState, action: Action) -> usize {
        action.locator as usize * self.words + action.choice as usize
    }

    fn horizon(&self) -> usize {
        self.positions
    }

    fn mode_of(&self, x: &BitSeqState, _found: &[BitSeqState]) -> Option<u64> {
        let bits = self.bits(x).ok()?;
        self.modes.iter().position(|m| levenshtein_slice(&bits, m) < self.cfg.delta).map(|i| i as u64)
    }

    fn similarity(&self, a: &BitSeqState, b: &BitSeqState) -> f64 {
        match (self.bits(a), self.bits(b)) {
            (Ok(x), Ok(y)) => 1.0 - hamming(&x, &y) as f64 / self.cfg.n as f64,
            _ => 0.0,
        }
    }

    fn render(&self, state: &BitSeqState) -> String {
        state
            .iter()
            .map(|w| match w {
                Some(w) => self.word_bits(*w),
                None => "_".repeat(self.cfg.k),
            })
            .collect()
    }

    fn artifact(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("kind".into(), "bitseq".into()),
            ("n".into(), self.cfg.n.to_string()),
            ("k".into(), self.cfg.k.to_string()),
            ("delta".into(), self.cfg.delta.to_string()),
            ("modes".into(), self.cfg.modes.len().to_string()),
        ];
        for (i, m) in self.cfg.modes.iter().enumerate() {
            out.push((format!("mode.{i}"), m.clone()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{available_actions, ArmSpace, GroupCursor, Restriction, SuperArm};

    fn env(n: usize, k: usize, modes: &[&str], delta: usize) -> BitSeqEnv {
        BitSeqEnv::new(BitSeqConfig { n, k, modes: modes.iter().map(|s| s.to_string()).collect(), delta }).unwrap()
    }

    #[test]
    fn insertion_renders() {
        let e = env(4, 2, &["0000"], 1);
        let s = e.apply(&e.initial_state(), Action::new(0, 1)).unwrap();
        assert_eq!(e.render(&s), "01__");
        assert!(e.apply(&s, Action::new(0, 2)).is_err());
    }

    #[test]
    fn restricted_action_count() {
        let e = env(16, 4, &["0000000000000000"], 1);
        let s: BitSeqState = vec![Some(0), Some(15), None, None];
        let space = ArmSpace::new(16, 1).unwrap();
        let allowed = ["0000", "1111"].map(|b| e.word_id(b).unwrap() as usize);
        let r = Restriction::new(space, SuperArm::subset(allowed.to_vec())).unwrap();
        let acts = available_actions(&e, &s, &r, &GroupCursor::default()).unwrap();
        assert_eq!(acts.len(), 4);
        let all = available_actions(&e, &s, &Restriction::all(space), &GroupCursor::default()).unwrap();
        assert_eq!(all, e.legal_actions(&s));
        assert_eq!(all.len(), 32);
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, all);
    }

    #[test]
    fn terminal_has_no_actions() {
        let e = env(4, 2, &["0000"], 1);
        let x = e.parse("0110").unwrap();
        let space = ArmSpace::new(4, 1).unwrap();
        assert!(matches!(
            available_actions(&e, &x, &Restriction::all(space), &GroupCursor::default()),
            Err(Error::TerminalState)
        ));
    }

    #[test]
    fn rewards() {
        let e = env(8, 4, &["00000000", "00110011"], 3);
        assert_eq!(e.reward(&e.parse("00110011").unwrap()).unwrap(), 1.0);
        let x = e.parse("01110001").unwrap();
        assert_eq!(e.min_distance(&x).unwrap(), 2);
        assert!((e.reward(&x).unwrap() - 0.135_335_283_236_612_7).abs() < 1e-15);
        let e = env(8, 4, &["00000000"], 1);
        assert_eq!(e.reward(&e.parse("11111111").unwrap()).unwrap(), (-8.0f64).exp());
        assert!(matches!(e.reward(&e.initial_state()), Err(Error::IncompleteState)));
    }

    #[test]
    fn mode_relabeling_invariance() {
        let a = env(8, 4, &["00000000", "11110000", "00111100"], 2);
        let b = env(8, 4, &["00111100", "00000000", "11110000"], 2);
        for bits in ["00000000", "10101010", "00111101", "11111111"] {
            let x = a.parse(bits).unwrap();
            assert_eq!(a.reward(&x).unwrap(), b.reward(&x).unwrap());
        }
    }

    #[test]
    fn mode_rule_is_strict() {
        let e = env(8, 4, &["00000000"], 2);
        assert_eq!(e.mode_of(&e.parse("00000001").unwrap(), &[]), Some(0));
        assert_eq!(e.mode_of(&e.parse("00000011").unwrap(), &[]), None);
    }

    #[test]
    fn parents_count_filled_positions() {
        let e = env(16, 4, &["0000000000000000"], 1);
        let s = vec![Some(1), None, Some(3), Some(0)];
        assert_eq!(e.parent_count(&s), 3);
        assert_eq!(e.parent_count(&e.initial_state()), 0);
    }

    #[test]
    fn artifact_round_trip() {
        let e = env(8, 4, &["00000000", "00111100"], 1);
        let text = artifact::write(&e.artifact());
        let back = BitSeqEnv::from_artifact(&text).unwrap();
        assert_eq!(back.config(), e.config());
    }

    #[test]
    fn pattern_modes_are_distinct_and_well_formed() {
        let mut rng = crate::rng::stream(0, "env", 0, 0);
        let pats: Vec<String> = DEFAULT_PATTERNS.iter().map(|s| s.to_string()).collect();
        let cfg = BitSeqConfig::from_patterns(16, 4, &pats, 10, 2, &mut rng).unwrap();
        assert_eq!(cfg.modes.len(), 10);
        let mut m = cfg.modes.clone();
        m.sort();
        m.dedup();
        assert_eq!(m.len(), 10);
    }
}
