//! The epoch loop: select a super arm, train on it for `I` rounds, then
//! draw one unrestricted evaluation batch that feeds the bandit.
//!
//! Before the first selection every arm must have at least one
//! observation, so warmup epochs train and evaluate with no restriction.
//! Warmup epochs advance the UCB clock and spend training rounds like any
//! other epoch.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bandit::{
    arm_rewards_from_batch, select_super_arm, ArmStats, CoOccurrence, RewardNormalizer, SelectionConfig, Strategy,
    UcbCount,
};
use crate::env::{ArmSpace, Environment, Restriction, SuperArm};
use crate::error::{Error, Result};
use crate::gfn::{round_seed, ElboEstimate, Provenance, Trainer, Trajectory};
use crate::metrics::{topk_similarity, ModeLedger, RegretTracker, TopKTracker};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Total training rounds `T`, warmup included.
    pub rounds: u64,
    /// Training rounds per epoch `I`.
    pub interval: u64,
    /// Unrestricted samples drawn after each epoch.
    pub eval_samples: usize,
    #[serde(default)]
    pub strategy: Strategy,
    /// Super-arm size `K`.
    pub k: usize,
    /// Sliding-window size `H`.
    pub window: usize,
    /// Co-occurrence update rate.
    pub alpha: f64,
    /// Co-occurrence weight in the greedy score.
    pub lambda: f64,
    #[serde(default)]
    pub ucb_count: UcbCount,
    /// Composite arm length `t` (1 = primitive choices).
    #[serde(default = "one")]
    pub arm_group: usize,
    #[serde(default = "default_warmup_cap")]
    pub warmup_cap: u64,
    /// Arms kept by the hard-prune strategy; a seeded random `K`-subset
    /// when absent.
    #[serde(default)]
    pub hard_prune_keep: Option<Vec<usize>>,
    /// ELBO every this many epochs (0 disables); always at the last epoch
    /// when enabled.
    #[serde(default)]
    pub elbo_every: u64,
    #[serde(default = "default_elbo_samples")]
    pub elbo_samples: usize,
    /// Capacity of the top-reward tracker.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_norm_eps")]
    pub normalizer_eps: f64,
}

fn one() -> usize {
    1
}
fn default_warmup_cap() -> u64 {
    50
}
fn default_elbo_samples() -> usize {
    256
}
fn default_top_k() -> usize {
    100
}
fn default_norm_eps() -> f64 {
    1e-8
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            rounds: 10_000,
            interval: 100,
            eval_samples: 16,
            strategy: Strategy::CucbGreedy,
            k: 4,
            window: 20,
            alpha: 0.1,
            lambda: 1.9,
            ucb_count: UcbCount::Window,
            arm_group: 1,
            warmup_cap: default_warmup_cap(),
            hard_prune_keep: None,
            elbo_every: 0,
            elbo_samples: default_elbo_samples(),
            top_k: default_top_k(),
            normalizer_eps: default_norm_eps(),
        }
    }
}

impl ProtocolConfig {
    /// Checks ranges against the arm space of `env`.
    pub fn validate<E: Environment>(&self, env: &E) -> Result<ArmSpace> {
        if self.interval == 0 || self.rounds < self.interval {
            return Err(Error::Config("need rounds >= interval >= 1".into()));
        }
        if self.strategy.uses_bandit() && self.eval_samples == 0 {
            return Err(Error::Config("bandit strategies need eval_samples >= 1".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("alpha must lie in [0, 1]".into()));
        }
        if self.arm_group == 0 {
            return Err(Error::Config("arm_group must be >= 1".into()));
        }
        if !(self.normalizer_eps > 0.0) {
            return Err(Error::Config("normalizer_eps must be positive".into()));
        }
        let space = ArmSpace::new(env.alphabet_size(), self.arm_group)?;
        let n = space.num_arms();
        if self.k > n {
            return Err(Error::KTooLarge { k: self.k, n });
        }
        if self.strategy.uses_bandit() && self.k < env.min_super_arm_size() {
            return Err(Error::Config(format!(
                "K = {} is below the minimum super-arm size {} for this environment",
                self.k,
                env.min_super_arm_size()
            )));
        }
        if let Some(keep) = &self.hard_prune_keep {
            let mut sorted = keep.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != self.k || sorted.iter().any(|&a| a >= n) {
                return Err(Error::Config("hard_prune_keep must list K distinct valid arm ids".into()));
            }
        }
        if self.k == 0 {
            return Err(Error::Config("K must be >= 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        Ok(space)
    }

    pub fn num_epochs(&self) -> u64 {
        self.rounds.div_ceil(self.interval)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: u64,
    /// UCB clock at selection time.
    pub t: u64,
    pub warmup: bool,
    pub super_arm: SuperArm,
    pub losses: Vec<f64>,
    pub log_z: f64,
    /// Arm rewards computed from this epoch's evaluation batch.
    pub arm_rewards: BTreeMap<usize, f64>,
    pub new_modes: usize,
    pub modes: usize,
    pub topk_mean: Option<f64>,
    pub topk_similarity: Option<f64>,
    pub regret_term: Option<f64>,
    pub cumulative_regret: Option<f64>,
    pub elbo: Option<ElboEstimate>,
    pub train_samples: u64,
    pub wall_ms: u128,
}

impl EpochRecord {
    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len().max(1) as f64
    }
}

/// Bandit state of one arm after an epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmRow {
    pub epoch: u64,
    pub arm: usize,
    pub mean: f64,
    pub pushes: u64,
    pub count: u64,
    /// UCB at the next selection; `None` while cold.
    pub ucb: Option<f64>,
    pub selected: bool,
}

/// Callback that sees every training batch.
type BatchHook<'e, S> = Box<dyn FnMut(&[Trajectory<S>]) + 'e>;

/// A run of the epoch loop over one environment.
pub struct Protocol<'e, E: Environment> {
    env: &'e E,
    cfg: ProtocolConfig,
    seed: u64,
    space: ArmSpace,
    selection: SelectionConfig,
    pub trainer: Trainer<E::State>,
    pub stats: ArmStats,
    /// Co-occurrence weights; empty unless the strategy is CUCB-greedy.
    pub cooccurrence: CoOccurrence,
    pub normalizer: RewardNormalizer,
    pub modes: ModeLedger<E::State>,
    pub topk: TopKTracker<E::State>,
    pub regret: RegretTracker,
    pub records: Vec<EpochRecord>,
    pub arm_rows: Vec<ArmRow>,
    rounds_done: u64,
    warmup_epochs: u64,
    /// Observer invoked with every training batch after its gradient step.
    inspect: Option<BatchHook<'e, E::State>>,
}

impl<'e, E: Environment> Protocol<'e, E> {
    pub fn new(env: &'e E, cfg: ProtocolConfig, trainer: Trainer<E::State>, seed: u64) -> Result<Self> {
        let space = cfg.validate(env)?;
        let n = space.num_arms();
        let keep = match (&cfg.hard_prune_keep, cfg.strategy) {
            (Some(keep), _) => {
                let mut k = keep.clone();
                k.sort_unstable();
                k
            }
            (None, Strategy::HardPrune) => {
                let mut rng = stream(seed, "hard-prune", 0, 0);
                let mut k = rand::seq::index::sample(&mut rng, n, cfg.k).into_vec();
                k.sort_unstable();
                k
            }
            _ => Vec::new(),
        };
        let selection = SelectionConfig { strategy: cfg.strategy, k: cfg.k, lambda: cfg.lambda, keep };
        let cooccurrence = if cfg.strategy == Strategy::CucbGreedy {
            CoOccurrence::new(n, cfg.alpha)?
        } else {
            CoOccurrence::new(0, cfg.alpha)?
        };
        Ok(Self {
            env,
            stats: ArmStats::new(n, cfg.window, cfg.ucb_count)?,
            cooccurrence,
            normalizer: RewardNormalizer::new(cfg.normalizer_eps),
            modes: ModeLedger::default(),
            topk: TopKTracker::new(cfg.top_k),
            regret: RegretTracker::new(cfg.k),
            records: Vec::new(),
            arm_rows: Vec::new(),
            rounds_done: 0,
            warmup_epochs: 0,
            inspect: None,
            selection,
            space,
            trainer,
            seed,
            cfg,
        })
    }

    /// Registers an observer of every training batch.
    pub fn inspect_batches(&mut self, f: impl FnMut(&[Trajectory<E::State>]) + 'e) {
        self.inspect = Some(Box::new(f));
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn space(&self) -> ArmSpace {
        self.space
    }

    pub fn env(&self) -> &E {
        self.env
    }

    pub fn hard_prune_keep(&self) -> &[usize] {
        &self.selection.keep
    }

    pub fn rounds_done(&self) -> u64 {
        self.rounds_done
    }

    pub fn warmup_epochs(&self) -> u64 {
        self.warmup_epochs
    }

    /// UCB clock: completed epochs + 1.
    pub fn round_clock(&self) -> u64 {
        self.records.len() as u64 + 1
    }

    pub fn is_done(&self) -> bool {
        self.rounds_done >= self.cfg.rounds
    }

    /// Runs epochs until the round budget is spent.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step_epoch()?;
        }
        Ok(())
    }

    fn choose(&mut self, epoch: u64, t: u64) -> Result<(SuperArm, bool)> {
        if !self.cfg.strategy.uses_bandit() {
            return Ok((SuperArm::All, false));
        }
        if !self.stats.is_warm() {
            if self.warmup_epochs >= self.cfg.warmup_cap {
                return Err(Error::WarmupStall(self.stats.cold_arms()));
            }
            return Ok((SuperArm::All, true));
        }
        let mut rng = stream(self.seed, "bandit", epoch, 0);
        Ok((select_super_arm(&self.stats, &self.cooccurrence, &self.selection, t, &mut rng)?, false))
    }

    fn verify_restriction(&self, batch: &[Trajectory<E::State>], super_arm: &SuperArm) -> Result<()> {
        if matches!(super_arm, SuperArm::All) {
            return Ok(());
        }
        for t in batch {
            if t.provenance != Provenance::Train || t.arms(&self.space).iter().any(|&a| !super_arm.contains(a)) {
                return Err(Error::RestrictionViolated);
            }
        }
        Ok(())
    }

    /// Runs one epoch and returns its record.
    pub fn step_epoch(&mut self) -> Result<&EpochRecord> {
        let started = Instant::now();
        let epoch = self.records.len() as u64;
        let t = self.round_clock();
        let (super_arm, warmup) = self.choose(epoch, t)?;
        if warmup {
            self.warmup_epochs += 1;
        }
        let regret_term =
            (self.cfg.strategy.uses_bandit() && !warmup).then(|| self.regret.update(&self.stats.means(), &super_arm));
        let restriction = Restriction::new(self.space, super_arm.clone())?;

        let rounds = self.cfg.interval.min(self.cfg.rounds - self.rounds_done);
        let mut losses = Vec::with_capacity(rounds as usize);
        let mut new_modes = 0;
        let mut train_samples = 0;
        for _ in 0..rounds {
            let seed = round_seed(self.seed, self.rounds_done);
            let (report, batch) = self.trainer.train_round(self.env, &restriction, seed)?;
            self.verify_restriction(&batch, &super_arm)?;
            if let Some(f) = self.inspect.as_mut() {
                f(&batch);
            }
            for tr in &batch {
                if self.modes.record(self.env, tr.terminal(), epoch) {
                    new_modes += 1;
                }
                self.topk.insert(tr.terminal(), tr.terminal_reward);
            }
            train_samples += batch.len() as u64;
            losses.push(report.loss);
            self.rounds_done += 1;
        }

        let arm_rewards = if self.cfg.strategy.uses_bandit() { self.bandit_update(epoch)? } else { BTreeMap::new() };
        let last = self.is_done();
        let elbo = if self.cfg.elbo_every > 0 && (last || (epoch + 1).is_multiple_of(self.cfg.elbo_every)) {
            Some(self.trainer.elbo_estimate(
                self.env,
                self.space,
                self.cfg.elbo_samples,
                derive_seed(self.seed, "elbo", epoch, 0),
            )?)
        } else {
            None
        };

        let next_t = t + 1;
        for arm in 0..self.space.num_arms() {
            if !self.cfg.strategy.uses_bandit() {
                break;
            }
            self.arm_rows.push(ArmRow {
                epoch,
                arm,
                mean: self.stats.mean(arm),
                pushes: self.stats.pushes(arm),
                count: self.stats.count(arm),
                ucb: self.stats.ucb(arm, next_t).ok(),
                selected: super_arm.contains(arm),
            });
        }

        self.records.push(EpochRecord {
            epoch,
            t,
            warmup,
            super_arm,
            losses,
            log_z: self.trainer.model.log_z,
            arm_rewards,
            new_modes,
            modes: self.modes.len(),
            topk_mean: self.topk.mean_reward(),
            topk_similarity: topk_similarity(self.env, &self.topk).ok(),
            regret_term,
            cumulative_regret: regret_term.map(|_| self.regret.cumulative()),
            elbo,
            train_samples,
            wall_ms: started.elapsed().as_millis(),
        });
        Ok(self.records.last().expect("just pushed"))
    }

    /// Evaluation batch, normalization, window pushes and co-occurrence.
    fn bandit_update(&mut self, epoch: u64) -> Result<BTreeMap<usize, f64>> {
        let batch = self.trainer.evaluate_batch(
            self.env,
            self.space,
            self.cfg.eval_samples,
            derive_seed(self.seed, "eval", epoch, 0),
        )?;
        for tr in &batch {
            self.normalizer.observe(tr.terminal_reward);
        }
        let scored: Vec<(Vec<usize>, f64)> =
            batch.iter().map(|tr| (tr.arms(&self.space), self.normalizer.normalize(tr.terminal_reward))).collect();
        let x = arm_rewards_from_batch(scored.iter().map(|(a, r)| (a.as_slice(), *r)));
        for (&arm, &v) in &x {
            self.stats.push(arm, v)?;
        }
        if self.cooccurrence.size() > 0 {
            for (arms, r) in &scored {
                self.cooccurrence.update(arms, *r);
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
#[path = "protocol_tests.rs"]
mod tests;
