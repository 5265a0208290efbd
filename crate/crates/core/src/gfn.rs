//! Trajectory-balance training.
//!
//! For a complete trajectory τ ending in x the TB residual is
//!
//! ```text
//! δ(τ) = log Z + Σ log P_F(s_t | s_{t-1}) − β·log R(x) − Σ log P_B(s_{t-1} | s_t)
//! ```
//!
//! and the loss is the batch mean of δ². `P_F` is the policy restricted to
//! the active super arm (masked softmax); ε-exploration only changes which
//! trajectories are sampled, never the residual.

use serde::{Deserialize, Serialize};

use crate::env::{Action, ArmSpace, Environment, GroupCursor, Restriction};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::policy::{
    backward_logprob, masked_log_softmax, optimizer_step, sample_from, AdamConfig, Gradient, OptimizerState,
    PolicyModel,
};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    /// `s_0, ..., x`.
    pub states: Vec<S>,
    pub actions: Vec<Action>,
    /// Position of each action in the unrestricted `A_s`.
    pub action_indices: Vec<usize>,
    /// Legality mask over `A_s` in force at each step.
    pub masks: Vec<Vec<bool>>,
    pub log_pf_terms: Vec<f64>,
    pub log_pb_terms: Vec<f64>,
    pub terminal_reward: f64,
    pub provenance: Provenance,
}

impl<S> Trajectory<S> {
    pub fn terminal(&self) -> &S {
        self.states.last().expect("trajectory has at least s_0")
    }

    pub fn choices(&self) -> Vec<u32> {
        self.actions.iter().map(|a| a.choice).collect()
    }

    pub fn log_pf(&self) -> f64 {
        self.log_pf_terms.iter().sum()
    }

    pub fn log_pb(&self) -> f64 {
        self.log_pb_terms.iter().sum()
    }

    /// Distinct bandit arms this trajectory contains.
    pub fn arms(&self, space: &ArmSpace) -> Vec<usize> {
        space.arms_in(&self.choices())
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Reward exponent: the target is `R(x)^β`.
    pub beta: f64,
    /// Probability of a uniformly random legal action at each step.
    pub epsilon: f64,
    /// Exploration used by evaluation batches; defaults to `epsilon`.
    #[serde(default)]
    pub eval_epsilon: Option<f64>,
    pub lr: f64,
    pub z_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 16, beta: 1.0, epsilon: 0.01, eval_epsilon: None, lr: 1e-3, z_lr: 1e-3 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.beta.is_finite() && self.beta >= 1.0) {
            return Err(Error::Config("beta must be >= 1".into()));
        }
        for e in std::iter::once(self.epsilon).chain(self.eval_epsilon) {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config("exploration epsilon must lie in [0, 1]".into()));
            }
        }
        if !(self.lr > 0.0 && self.z_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    pub fn eval_epsilon(&self) -> f64 {
        self.eval_epsilon.unwrap_or(self.epsilon)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::new(self.lr, self.z_lr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TBLossReport {
    pub loss: f64,
    pub residuals: Vec<f64>,
    pub log_z: f64,
}

/// Counters proving that evaluation samples never reach a gradient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ProvenanceCounters {
    pub train_sampled: u64,
    pub eval_sampled: u64,
    pub gradient_samples: u64,
    pub eval_in_gradient: u64,
}

/// Rolls out one trajectory from `s_0` under `restriction`.
pub fn sample_trajectory<E: Environment>(
    model: &PolicyModel<E::State>,
    env: &E,
    restriction: &Restriction,
    epsilon: f64,
    provenance: Provenance,
    rng: &mut crate::rng::Rng,
) -> Result<Trajectory<E::State>> {
    let mut state = env.initial_state();
    let mut cursor = GroupCursor::default();
    let horizon = env.horizon();
    let mut t = Trajectory {
        states: Vec::with_capacity(horizon + 1),
        actions: Vec::with_capacity(horizon),
        action_indices: Vec::with_capacity(horizon),
        masks: Vec::with_capacity(horizon),
        log_pf_terms: Vec::with_capacity(horizon),
        log_pb_terms: Vec::with_capacity(horizon),
        terminal_reward: 0.0,
        provenance,
    };
    while !env.is_terminal(&state) {
        let actions = env.legal_actions(&state);
        let mask = restriction.mask(&cursor, &actions);
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyActionSet);
        }
        let lp = masked_log_softmax(&model.logits(env, &state, &actions)?, &mask)?;
        let pick = sample_from(&actions, &lp, &mask, epsilon, rng)?;
        let next = env.apply(&state, pick.action)?;
        cursor.advance(restriction.space(), pick.action.choice);
        t.log_pb_terms.push(backward_logprob(env, &next));
        t.log_pf_terms.push(pick.log_pf);
        t.actions.push(pick.action);
        t.action_indices.push(pick.index);
        t.masks.push(mask);
        t.states.push(std::mem::replace(&mut state, next));
    }
    t.terminal_reward = env.reward(&state)?;
    t.states.push(state);
    Ok(t)
}

/// Samples `n` trajectories with per-trajectory streams derived from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn sample_batch<E: Environment>(
    model: &PolicyModel<E::State>,
    env: &E,
    restriction: &Restriction,
    epsilon: f64,
    provenance: Provenance,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Trajectory<E::State>>> {
    exec.map_range(n, |i| {
        let mut rng = stream(seed, "traj", i as u64, 0);
        sample_trajectory(model, env, restriction, epsilon, provenance, &mut rng)
    })
    .into_iter()
    .collect()
}

fn log_reward(t: &Trajectory<impl Sized>) -> Result<f64> {
    if !(t.terminal_reward > 0.0) || !t.terminal_reward.is_finite() {
        return Err(Error::NonPositiveReward(t.terminal_reward));
    }
    Ok(t.terminal_reward.ln())
}

/// Policy log-probability of the trajectory under the current parameters.
fn recompute_log_pf<E: Environment>(model: &PolicyModel<E::State>, env: &E, t: &Trajectory<E::State>) -> Result<f64> {
    let mut total = 0.0;
    for (step, state) in t.states[..t.len()].iter().enumerate() {
        let actions = env.legal_actions(state);
        let lp = masked_log_softmax(&model.logits(env, state, &actions)?, &t.masks[step])?;
        total += lp[t.action_indices[step]];
    }
    Ok(total)
}

/// TB residual `δ(τ)` with the current parameters.
pub fn tb_residual<E: Environment>(
    model: &PolicyModel<E::State>,
    env: &E,
    t: &Trajectory<E::State>,
    beta: f64,
) -> Result<f64> {
    Ok(model.log_z + recompute_log_pf(model, env, t)? - beta * log_reward(t)? - t.log_pb())
}

pub fn tb_loss<E: Environment>(
    model: &PolicyModel<E::State>,
    env: &E,
    batch: &[Trajectory<E::State>],
    beta: f64,
) -> Result<TBLossReport> {
    let residuals = batch.iter().map(|t| tb_residual(model, env, t, beta)).collect::<Result<Vec<_>>>()?;
    Ok(report(residuals, model.log_z))
}

fn report(residuals: Vec<f64>, log_z: f64) -> TBLossReport {
    let loss = residuals.iter().map(|d| d * d).sum::<f64>() / residuals.len().max(1) as f64;
    TBLossReport { loss, residuals, log_z }
}

/// Residual and gradient of `δ(τ)²` scaled by `weight_scale` (`1/B` for
/// a batch mean).
fn trajectory_gradient<E: Environment>(
    model: &PolicyModel<E::State>,
    env: &E,
    t: &Trajectory<E::State>,
    beta: f64,
    weight_scale: f64,
) -> Result<(f64, Gradient)> {
    if t.provenance != Provenance::Train {
        return Err(Error::EvalInGradient);
    }
    let mut caches = Vec::with_capacity(t.len());
    let mut log_pf = 0.0;
    for (step, state) in t.states[..t.len()].iter().enumerate() {
        let actions = env.legal_actions(state);
        let (logits, cache) = model.logits_cached(env, state, &actions)?;
        let lp = masked_log_softmax(&logits, &t.masks[step])?;
        log_pf += lp[t.action_indices[step]];
        caches.push((lp, cache));
    }
    let delta = model.log_z + log_pf - beta * log_reward(t)? - t.log_pb();
    let w = 2.0 * delta * weight_scale;
    let mut grad = model.zero_gradient();
    grad.log_z = w;
    for (step, (lp, cache)) in caches.iter().enumerate() {
        let taken = t.action_indices[step];
        let dlogits: Vec<f64> = lp
            .iter()
            .enumerate()
            .map(|(j, &l)| if l == f64::NEG_INFINITY { 0.0 } else { w * (f64::from(u8::from(j == taken)) - l.exp()) })
            .collect();
        model.backward(cache, &dlogits, &mut grad);
    }
    Ok((delta, grad))
}

/// Mean TB loss over `batch` and its analytic gradient.
pub fn loss_and_gradient<E: Environment>(
    model: &PolicyModel<E::State>,
    env: &E,
    batch: &[Trajectory<E::State>],
    beta: f64,
    exec: Execution,
) -> Result<(TBLossReport, Gradient)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let parts = exec.map_slice(batch, |t| trajectory_gradient(model, env, t, beta, scale));
    let mut total = model.zero_gradient();
    let mut residuals = Vec::with_capacity(batch.len());
    for part in parts {
        let (delta, g) = part?;
        residuals.push(delta);
        total.accumulate(&g);
    }
    Ok((report(residuals, model.log_z), total))
}

/// Monte-Carlo ELBO: mean of `β·log R(x) + Σ log P_B − Σ log P_F` over
/// on-policy (ε = 0) unrestricted trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElboEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// The policy, its optimizer, and the sample bookkeeping of one run.
#[derive(Debug, Clone)]
pub struct Trainer<S> {
    pub model: PolicyModel<S>,
    pub opt: OptimizerState,
    pub cfg: TrainConfig,
    pub counters: ProvenanceCounters,
    pub exec: Execution,
}

impl<S: Clone + Eq + std::hash::Hash + Send + Sync> Trainer<S> {
    pub fn new(model: PolicyModel<S>, cfg: TrainConfig, exec: Execution) -> Self {
        let opt = OptimizerState::new(cfg.adam(), model.num_params());
        Self { model, opt, cfg, counters: ProvenanceCounters::default(), exec }
    }

    /// Samples one training batch under `restriction`, takes one optimizer
    /// step on its TB loss, and returns the report and the batch.
    ///
    /// A non-finite gradient leaves the model untouched and is returned as
    /// [`Error::NonFiniteGradient`].
    pub fn train_round<E: Environment<State = S>>(
        &mut self,
        env: &E,
        restriction: &Restriction,
        seed: u64,
    ) -> Result<(TBLossReport, Vec<Trajectory<S>>)> {
        let batch = sample_batch(
            &self.model,
            env,
            restriction,
            self.cfg.epsilon,
            Provenance::Train,
            self.cfg.batch_size,
            seed,
            self.exec,
        )?;
        self.counters.train_sampled += batch.len() as u64;
        let (report, grad) = loss_and_gradient(&self.model, env, &batch, self.cfg.beta, self.exec)?;
        optimizer_step(&mut self.opt, &mut self.model, &grad)?;
        self.counters.gradient_samples += batch.iter().filter(|t| t.provenance == Provenance::Train).count() as u64;
        self.counters.eval_in_gradient += batch.iter().filter(|t| t.provenance == Provenance::Eval).count() as u64;
        Ok((report, batch))
    }

    /// Unrestricted evaluation samples; they never contribute a gradient.
    pub fn evaluate_batch<E: Environment<State = S>>(
        &mut self,
        env: &E,
        space: ArmSpace,
        n: usize,
        seed: u64,
    ) -> Result<Vec<Trajectory<S>>> {
        if n == 0 {
            return Err(Error::Config("evaluation batch needs n >= 1".into()));
        }
        let batch = sample_batch(
            &self.model,
            env,
            &Restriction::all(space),
            self.cfg.eval_epsilon(),
            Provenance::Eval,
            n,
            seed,
            self.exec,
        )?;
        self.counters.eval_sampled += batch.len() as u64;
        Ok(batch)
    }

    pub fn elbo_estimate<E: Environment<State = S>>(
        &self,
        env: &E,
        space: ArmSpace,
        m: usize,
        seed: u64,
    ) -> Result<ElboEstimate> {
        elbo_estimate(&self.model, env, space, self.cfg.beta, m, seed, self.exec)
    }
}

pub fn elbo_estimate<E: Environment>(
    model: &PolicyModel<E::State>,
    env: &E,
    space: ArmSpace,
    beta: f64,
    m: usize,
    seed: u64,
    exec: Execution,
) -> Result<ElboEstimate> {
    if m == 0 {
        return Err(Error::Config("ELBO needs M >= 1".into()));
    }
    let batch = sample_batch(model, env, &Restriction::all(space), 0.0, Provenance::Eval, m, seed, exec)?;
    let terms =
        batch.iter().map(|t| Ok(beta * log_reward(t)? + t.log_pb() - t.log_pf())).collect::<Result<Vec<f64>>>()?;
    let mean = terms.iter().sum::<f64>() / m as f64;
    let std_error = if m > 1 {
        let var = terms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    } else {
        0.0
    };
    Ok(ElboEstimate { mean, std_error })
}

/// Seed of training round `round` of a run with master seed `master`.
pub fn round_seed(master: u64, round: u64) -> u64 {
    derive_seed(master, "train", round, 0)
}

#[cfg(test)]
#[path = "gfn_tests.rs"]
mod tests;
