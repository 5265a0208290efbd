//! Combinatorial semi-bandit over base arms.
//!
//! Each base arm keeps a sliding window of normalized rewards. A super arm
//! of size `K` is composed each epoch by one of several strategies; the
//! default CUCB-greedy rule seeds with the highest-UCB arm and then adds
//! the arm maximizing `μ̄_a + λ·mean_{b∈𝕊} W_ab`.

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::env::SuperArm;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub mod stats;

pub use stats::{arm_rewards_from_batch, ucb_value, ArmStats, CoOccurrence, RewardNormalizer, UcbCount};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    CucbGreedy,
    /// Uniform random `K`-subsets (RandGFN).
    Random,
    /// `K` draws without replacement with probability proportional to `μ̂`.
    Proportional,
    /// A fixed subset chosen once per run.
    HardPrune,
    /// Thompson sampling with moment-matched Beta posteriors.
    Cts,
    /// No restriction: every epoch trains on all arms.
    PlainTb,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::CucbGreedy,
        Strategy::Random,
        Strategy::Proportional,
        Strategy::HardPrune,
        Strategy::Cts,
        Strategy::PlainTb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::CucbGreedy => "cucb-greedy",
            Strategy::Random => "random",
            Strategy::Proportional => "proportional",
            Strategy::HardPrune => "hard-prune",
            Strategy::Cts => "cts",
            Strategy::PlainTb => "plain-tb",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }

    /// Whether the strategy consumes arm statistics and so needs a warm
    /// bandit and an evaluation batch each epoch.
    pub fn uses_bandit(self) -> bool {
        !matches!(self, Strategy::PlainTb)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    pub k: usize,
    pub lambda: f64,
    /// Arms retained by [`Strategy::HardPrune`].
    pub keep: Vec<usize>,
}

impl SelectionConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("super-arm size K must be >= 1".into()));
        }
        if self.k > n {
            return Err(Error::KTooLarge { k: self.k, n });
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if self.strategy == Strategy::HardPrune && (self.keep.len() != self.k || self.keep.iter().any(|&a| a >= n)) {
            return Err(Error::Config("hard-prune keep set must hold K valid arm ids".into()));
        }
        Ok(())
    }
}

/// Indices of the `k` largest values; ties go to the smaller index.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn argmax_by<F: Fn(usize) -> f64>(candidates: impl Iterator<Item = usize>, score: F) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for a in candidates {
        let s = score(a);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((a, s));
        }
    }
    best.map(|(a, _)| a)
}

/// Greedy composition from UCB values and co-occurrence weights.
pub fn cucb_greedy(ucb: &[f64], w: &CoOccurrence, k: usize, lambda: f64) -> Vec<usize> {
    let n = ucb.len();
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let mut affinity = vec![0.0; n];
    while chosen.len() < k {
        let size = chosen.len();
        let pick = argmax_by((0..n).filter(|&a| !taken[a]), |a| {
            if size == 0 {
                ucb[a]
            } else {
                ucb[a] + lambda * affinity[a] / size as f64
            }
        })
        .expect("k <= n");
        taken[pick] = true;
        chosen.push(pick);
        if lambda != 0.0 {
            for (a, aff) in affinity.iter_mut().enumerate() {
                *aff += w.get(a, pick);
            }
        }
    }
    chosen.sort_unstable();
    chosen
}

fn proportional(means: &[f64], k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..means.len()).collect();
    let mut chosen = Vec::with_capacity(k);
    while chosen.len() < k {
        let total: f64 = remaining.iter().map(|&a| means[a].max(0.0)).sum();
        let u: f64 = rng.gen();
        let pos = if total > 0.0 {
            let target = u * total;
            let mut acc = 0.0;
            let mut pos = remaining.len() - 1;
            for (p, &a) in remaining.iter().enumerate() {
                acc += means[a].max(0.0);
                if target < acc {
                    pos = p;
                    break;
                }
            }
            pos
        } else {
            ((u * remaining.len() as f64) as usize).min(remaining.len() - 1)
        };
        chosen.push(remaining.remove(pos));
    }
    chosen.sort_unstable();
    chosen
}

fn random_subset(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut v = sample(rng, n, k).into_vec();
    v.sort_unstable();
    v
}

/// Posterior draw for one arm: Beta matching the window mean and the
/// variance of that mean; the mean itself when the variance vanishes.
fn posterior_draw(stats: &ArmStats, i: usize, rng: &mut Rng) -> f64 {
    let m = stats.mean(i);
    let xs: Vec<f64> = stats.buffer(i).collect();
    let n = xs.len() as f64;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n / n;
    let cap = m * (1.0 - m);
    if var <= 0.0 || cap <= 0.0 {
        return m;
    }
    let var = var.min(0.999 * cap);
    let c = cap / var - 1.0;
    match Beta::new(m * c, (1.0 - m) * c) {
        Ok(beta) => beta.sample(rng),
        Err(_) => m,
    }
}

/// Thompson-sampling super arm: top-`k` of one posterior draw per arm.
pub fn cts_select(stats: &ArmStats, k: usize, rng: &mut Rng) -> Result<SuperArm> {
    let n = stats.num_arms();
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    if let Some(&i) = stats.cold_arms().first() {
        return Err(Error::ColdArm(i));
    }
    let draws: Vec<f64> = (0..n).map(|i| posterior_draw(stats, i, rng)).collect();
    Ok(SuperArm::subset(top_k(&draws, k)))
}

/// Composes the super arm for one epoch at UCB clock `t`.
pub fn select_super_arm(
    stats: &ArmStats,
    w: &CoOccurrence,
    cfg: &SelectionConfig,
    t: u64,
    rng: &mut Rng,
) -> Result<SuperArm> {
    let n = stats.num_arms();
    if cfg.k > n {
        return Err(Error::KTooLarge { k: cfg.k, n });
    }
    Ok(match cfg.strategy {
        Strategy::PlainTb => SuperArm::All,
        Strategy::CucbGreedy => {
            let ucb = stats.ucb_all(t)?;
            SuperArm::subset(cucb_greedy(&ucb, w, cfg.k, cfg.lambda))
        }
        Strategy::Random => SuperArm::subset(random_subset(n, cfg.k, rng)),
        Strategy::Proportional => SuperArm::subset(proportional(&stats.means(), cfg.k, rng)),
        Strategy::HardPrune => SuperArm::subset(cfg.keep.clone()),
        Strategy::Cts => return cts_select(stats, cfg.k, rng),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::{any, prop, prop_assert_eq, proptest};

    fn stats_with(means: &[f64], pushes: usize) -> ArmStats {
        let mut s = ArmStats::new(means.len(), 100, UcbCount::Window).unwrap();
        for (i, &m) in means.iter().enumerate() {
            for _ in 0..pushes {
                s.push(i, m).unwrap();
            }
        }
        s
    }

    #[test]
    fn lambda_zero_is_top_k() {
        let w = CoOccurrence::new(3, 0.1).unwrap();
        assert_eq!(cucb_greedy(&[0.9, 0.8, 0.7], &w, 2, 0.0), vec![0, 1]);
    }

    #[test]
    fn cooccurrence_steers_greedy() {
        let mut w = CoOccurrence::new(3, 0.1).unwrap();
        w.set(0, 2, 0.5);
        assert_eq!(cucb_greedy(&[0.9, 0.8, 0.7], &w, 2, 1.0), vec![0, 2]);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let w = CoOccurrence::new(4, 0.1).unwrap();
        assert_eq!(cucb_greedy(&[0.5, 0.7, 0.7, 0.7], &w, 2, 0.0), vec![1, 2]);
        assert_eq!(top_k(&[0.5, 0.5, 0.5], 1), vec![0]);
    }

    #[test]
    fn hard_prune_is_fixed() {
        let s = stats_with(&[0.1, 0.2, 0.3, 0.9, 0.8, 0.4], 1);
        let w = CoOccurrence::new(6, 0.1).unwrap();
        let cfg = SelectionConfig { strategy: Strategy::HardPrune, k: 4, lambda: 0.0, keep: vec![0, 1, 2, 5] };
        cfg.validate(6).unwrap();
        let mut rng = stream(0, "b", 0, 0);
        for t in 1..20 {
            let a = select_super_arm(&s, &w, &cfg, t, &mut rng).unwrap();
            assert_eq!(a, SuperArm::subset(vec![0, 1, 2, 5]));
        }
    }

    #[test]
    fn errors() {
        let s = ArmStats::new(3, 5, UcbCount::Window).unwrap();
        let w = CoOccurrence::new(3, 0.1).unwrap();
        let mut rng = stream(0, "b", 0, 0);
        let mut cfg = SelectionConfig { strategy: Strategy::CucbGreedy, k: 2, lambda: 0.0, keep: vec![] };
        assert!(matches!(select_super_arm(&s, &w, &cfg, 1, &mut rng), Err(Error::ColdArm(0))));
        cfg.k = 4;
        assert!(matches!(select_super_arm(&s, &w, &cfg, 1, &mut rng), Err(Error::KTooLarge { k: 4, n: 3 })));
        assert!(cfg.validate(3).is_err());
        assert!(matches!(cts_select(&s, 2, &mut rng), Err(Error::ColdArm(0))));
    }

    #[test]
    fn random_subsets_are_uniform() {
        let s = stats_with(&[0.5; 4], 1);
        let w = CoOccurrence::new(4, 0.1).unwrap();
        let cfg = SelectionConfig { strategy: Strategy::Random, k: 2, lambda: 0.0, keep: vec![] };
        let mut rng = stream(1, "b", 0, 0);
        let mut counts = std::collections::BTreeMap::new();
        let n = 12_000;
        for _ in 0..n {
            *counts.entry(select_super_arm(&s, &w, &cfg, 5, &mut rng).unwrap().label()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for &c in counts.values() {
            assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() < 0.015);
        }
    }

    #[test]
    fn proportional_follows_means() {
        let s = stats_with(&[0.0, 0.25, 0.75], 1);
        let w = CoOccurrence::new(3, 0.1).unwrap();
        let cfg = SelectionConfig { strategy: Strategy::Proportional, k: 1, lambda: 0.0, keep: vec![] };
        let mut rng = stream(2, "b", 0, 0);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| select_super_arm(&s, &w, &cfg, 3, &mut rng).unwrap() == SuperArm::subset(vec![2]))
            .count();
        assert!((hits as f64 / n as f64 - 0.75).abs() < 0.02);
        let zero = stats_with(&[0.0, 0.0], 1);
        let cfg2 = SelectionConfig { k: 2, ..cfg };
        let w2 = CoOccurrence::new(2, 0.1).unwrap();
        assert_eq!(select_super_arm(&zero, &w2, &cfg2, 3, &mut rng).unwrap(), SuperArm::subset(vec![0, 1]));
    }

    #[test]
    fn cts_degenerate_and_symmetric() {
        let s = stats_with(&[0.2, 0.9, 0.5, 0.7], 5);
        let mut rng = stream(3, "b", 0, 0);
        assert_eq!(cts_select(&s, 2, &mut rng).unwrap(), SuperArm::subset(vec![1, 3]));
        assert_eq!(cts_select(&s, 4, &mut rng).unwrap(), SuperArm::subset(vec![0, 1, 2, 3]));
        let mut noisy = ArmStats::new(2, 10, UcbCount::Window).unwrap();
        for x in [0.2, 0.8, 0.5, 0.4, 0.6] {
            noisy.push(0, x).unwrap();
            noisy.push(1, x).unwrap();
        }
        let n = 10_000;
        let first = (0..n).filter(|_| cts_select(&noisy, 1, &mut rng).unwrap() == SuperArm::subset(vec![0])).count();
        assert!((first as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(Strategy::parse(s.name()).unwrap(), s);
        }
        assert!(Strategy::parse("ucb").is_err());
    }

    proptest! {
        #[test]
        fn greedy_without_synergy_is_top_k(
            raw in prop::collection::vec(0.0f64..1.0, 2..12),
            k_frac in 0.0f64..1.0,
            t in 1u64..500,
            seed in any::<u64>(),
        ) {
            let n = raw.len();
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let mut s = ArmStats::new(n, 4, UcbCount::Window).unwrap();
            let mut rng = stream(seed, "p", 0, 0);
            for (i, &m) in raw.iter().enumerate() {
                for _ in 0..(1 + rng.gen_range(0..6)) {
                    s.push(i, m).unwrap();
                }
            }
            let mut w = CoOccurrence::new(n, 0.3).unwrap();
            w.update(&[0, n - 1], 0.9);
            let cfg = SelectionConfig { strategy: Strategy::CucbGreedy, k, lambda: 0.0, keep: vec![] };
            let ucb = s.ucb_all(t).unwrap();
            let a = select_super_arm(&s, &w, &cfg, t, &mut rng).unwrap();
            prop_assert_eq!(a.clone(), SuperArm::subset(top_k(&ucb, k)));
            let b = select_super_arm(&s, &w, &cfg, t, &mut rng).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
