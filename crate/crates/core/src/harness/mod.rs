//! Configuration, seeded runs, run-directory persistence, sweeps and
//! brute-force oracles.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::gfn::{ProvenanceCounters, Trainer};
use crate::policy::PolicyModel;
use crate::protocol::Protocol;
use crate::rng::stream;
use crate::with_env;

pub mod config;
pub mod oracle;
pub mod rundir;
pub mod sweep;

pub use config::{AnyEnv, Axis, EnvSpec, RunConfig};

#[derive(Debug, Clone, Serialize)]
pub struct ModeHit {
    pub id: u64,
    pub epoch: u64,
    pub sample: String,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ElboPoint {
    pub epoch: u64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        Self { kind: e.kind(), message: e.to_string() }
    }
}

/// End-of-run report, also written as `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub env: &'static str,
    pub strategy: String,
    pub seed: u64,
    pub env_seed: u64,
    pub epochs: usize,
    pub warmup_epochs: u64,
    pub rounds: u64,
    pub modes: usize,
    pub mode_hits: Vec<ModeHit>,
    pub topk_mean: Option<f64>,
    pub topk_similarity: Option<f64>,
    pub cumulative_regret: Option<f64>,
    pub final_log_z: f64,
    pub final_loss: Option<f64>,
    pub elbo: Vec<ElboPoint>,
    pub provenance: ProvenanceCounters,
    pub arm_means: Vec<f64>,
    pub hard_prune_keep: Vec<usize>,
    pub wall_ms: u128,
    pub error: Option<ErrorInfo>,
}

/// Runs `cfg` and, if `out` is given, writes the run directory there.
pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<RunSummary> {
    let env = cfg.validate()?;
    with_env!(&env, e => run_env(e, cfg, out))
}

fn summarize<E: Environment>(p: &Protocol<'_, E>, cfg: &RunConfig, hash: String, wall_ms: u128) -> RunSummary {
    let env = p.env();
    RunSummary {
        config_hash: hash,
        env: env.name(),
        strategy: cfg.bandit.strategy.to_string(),
        seed: cfg.seed,
        env_seed: cfg.env_seed(),
        epochs: p.records.len(),
        warmup_epochs: p.warmup_epochs(),
        rounds: p.rounds_done(),
        modes: p.modes.len(),
        mode_hits: p
            .modes
            .hits()
            .iter()
            .zip(p.modes.exemplars())
            .map(|(&(id, epoch), x)| ModeHit { id, epoch, sample: env.render(x) })
            .collect(),
        topk_mean: p.topk.mean_reward(),
        topk_similarity: crate::metrics::topk_similarity(env, &p.topk).ok(),
        cumulative_regret: cfg.bandit.strategy.uses_bandit().then(|| p.regret.cumulative()),
        final_log_z: p.trainer.model.log_z,
        final_loss: p.records.last().map(|r| r.mean_loss()),
        elbo: p
            .records
            .iter()
            .filter_map(|r| r.elbo.map(|e| ElboPoint { epoch: r.epoch, mean: e.mean, std_error: e.std_error }))
            .collect(),
        provenance: p.trainer.counters,
        arm_means: p.stats.means(),
        hard_prune_keep: p.hard_prune_keep().to_vec(),
        wall_ms,
        error: None,
    }
}

/// Runs on an already-built environment.
pub fn run_env<E: Environment>(env: &E, cfg: &RunConfig, out: Option<&Path>) -> Result<RunSummary> {
    let started = Instant::now();
    let hash = cfg.hash()?;
    let mut rng = stream(cfg.seed, "init", 0, 0);
    let model = PolicyModel::from_config(env, &cfg.policy, &mut rng)?;
    let trainer = Trainer::new(model, cfg.gfn.clone(), cfg.execution);
    let mut p = Protocol::new(env, cfg.protocol_config(), trainer, cfg.seed)?;
    let mut writer = match out {
        Some(dir) => Some(rundir::RunDir::create(dir, cfg, env)?),
        None => None,
    };
    let mut outcome = Ok(());
    while !p.is_done() {
        if let Err(e) = p.step_epoch() {
            outcome = Err(e);
            break;
        }
        if let Some(w) = writer.as_mut() {
            w.epoch(&p)?;
        }
    }
    let mut summary = summarize(&p, cfg, hash, started.elapsed().as_millis());
    if let Err(e) = &outcome {
        summary.error = Some(e.into());
    }
    if let Some(w) = writer {
        w.finish(&p, &summary, cfg.output.checkpoint)?;
    }
    outcome.map(|_| summary)
}
