//! Run-directory layout:
//!
//! ```text
//! config.toml            canonical copy of the run configuration
//! env.txt                environment instance (mode sets, reward tables)
//! metrics.csv            one row per epoch
//! arms.csv               one row per (epoch, arm)
//! modes.csv              discovered modes with first-hit epoch
//! summary.json           end-of-run report
//! model.txt              policy checkpoint
//! cooccurrence/*.csv     co-occurrence snapshots, when enabled
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::env::{artifact, Environment};
use crate::error::Result;
use crate::protocol::Protocol;

use super::{RunConfig, RunSummary};

pub const METRICS_HEADER: [&str; 17] = [
    "epoch",
    "t",
    "phase",
    "strategy",
    "super_arm",
    "rounds",
    "mean_loss",
    "log_z",
    "modes",
    "new_modes",
    "topk_mean",
    "topk_similarity",
    "regret_term",
    "cumulative_regret",
    "elbo",
    "elbo_se",
    "train_samples",
];

pub const ARMS_HEADER: [&str; 8] = ["epoch", "arm", "choices", "mean", "pushes", "count", "ucb", "selected"];

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

/// Writes the artifacts of one run.
pub struct RunDir {
    dir: PathBuf,
    cooccurrence_every: u64,
}

impl RunDir {
    pub fn create<E: Environment>(dir: &Path, cfg: &RunConfig, env: &E) -> Result<Self> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
        fs::write(dir.join("env.txt"), artifact::write(&env.artifact()))?;
        Ok(Self { dir: dir.to_path_buf(), cooccurrence_every: cfg.output.cooccurrence_every })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Per-epoch hook; writes co-occurrence snapshots when due.
    pub fn epoch<E: Environment>(&mut self, p: &Protocol<'_, E>) -> Result<()> {
        let epoch = p.records.len() as u64;
        if self.cooccurrence_every > 0 && p.cooccurrence.size() > 0 && epoch.is_multiple_of(self.cooccurrence_every) {
            let dir = self.dir.join("cooccurrence");
            fs::create_dir_all(&dir)?;
            fs::write(dir.join(format!("epoch_{:06}.csv", epoch - 1)), p.cooccurrence.to_csv())?;
        }
        Ok(())
    }

    pub fn finish<E: Environment>(self, p: &Protocol<'_, E>, summary: &RunSummary, checkpoint: bool) -> Result<()> {
        write_metrics(&self.dir.join("metrics.csv"), p)?;
        write_arms(&self.dir.join("arms.csv"), p)?;
        let mut w = csv_writer(&self.dir.join("modes.csv"))?;
        w.write_record(["id", "epoch", "sample"])?;
        for m in &summary.mode_hits {
            w.write_record([m.id.to_string(), m.epoch.to_string(), m.sample.clone()])?;
        }
        w.flush()?;
        let mut json = serde_json::to_string_pretty(summary)?;
        json.push('\n');
        fs::write(self.dir.join("summary.json"), json)?;
        if checkpoint {
            fs::write(self.dir.join("model.txt"), p.trainer.model.checkpoint())?;
        }
        Ok(())
    }
}

pub fn write_metrics<E: Environment>(path: &Path, p: &Protocol<'_, E>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(METRICS_HEADER)?;
    let strategy = p.config().strategy.to_string();
    for r in &p.records {
        w.write_record([
            r.epoch.to_string(),
            r.t.to_string(),
            if r.warmup { "warmup" } else { "select" }.to_string(),
            strategy.clone(),
            r.super_arm.label(),
            r.losses.len().to_string(),
            num(r.mean_loss()),
            num(r.log_z),
            r.modes.to_string(),
            r.new_modes.to_string(),
            opt(r.topk_mean),
            opt(r.topk_similarity),
            opt(r.regret_term),
            opt(r.cumulative_regret),
            opt(r.elbo.map(|e| e.mean)),
            opt(r.elbo.map(|e| e.std_error)),
            r.train_samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_arms<E: Environment>(path: &Path, p: &Protocol<'_, E>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(ARMS_HEADER)?;
    let space = p.space();
    for a in &p.arm_rows {
        let choices: Vec<String> = space.decompose(a.arm).iter().map(|c| c.to_string()).collect();
        w.write_record([
            a.epoch.to_string(),
            a.arm.to_string(),
            choices.join("-"),
            num(a.mean),
            a.pushes.to_string(),
            a.count.to_string(),
            opt(a.ucb),
            u8::from(a.selected).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
