use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use cmab_gfn::bandit::{SelectionConfig, Strategy, UcbCount};
use cmab_gfn::env::Environment;
use cmab_gfn::harness::oracle::{oracle_bandit, oracle_enumerate, OracleBanditConfig};
use cmab_gfn::harness::sweep::{parse_seeds, parse_values, sweep};
use cmab_gfn::harness::{self, Axis, RunConfig};
use cmab_gfn::{with_env, Error, Result};

#[derive(Parser)]
#[command(name = "cmab-gfn", version, about = "GFlowNet training with bandit-selected action subspaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; defaults to runs/<config name>-seed<seed>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vary one hyperparameter over a set of seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of K, alpha, lambda, H, beta, strategy, seed.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        /// Comma-separated seeds or a range such as 0..5.
        #[arg(long, default_value = "0")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact target distribution of a small environment, or a synthetic
    /// bandit run when --means is given.
    Oracle {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the full table (CSV) or bandit trace (JSON) here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Planted arm means for the bandit oracle.
        #[arg(long)]
        means: Option<String>,
        #[arg(long, default_value = "cucb-greedy")]
        strategy: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 5000)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 20)]
        window: usize,
        /// State cap for enumeration.
        #[arg(long, default_value_t = 1_000_000)]
        cap: usize,
    },
    /// Parse and check a configuration without training.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let out = out.unwrap_or_else(|| {
                let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
                PathBuf::from("runs").join(format!("{stem}-seed{}", cfg.seed))
            });
            let s = harness::run(&cfg, Some(&out))?;
            Ok(json!({
                "out": out,
                "config_hash": s.config_hash,
                "modes": s.modes,
                "topk_mean": s.topk_mean,
                "cumulative_regret": s.cumulative_regret,
                "final_loss": s.final_loss,
                "wall_ms": s.wall_ms,
            }))
        }
        Command::Sweep { config, axis, values, seeds, out } => {
            let cfg = load(&config, None)?;
            let axis = Axis::parse(&axis)?;
            let points = sweep(&cfg, axis, &parse_values(&values), &parse_seeds(&seeds)?, Some(&out))?;
            Ok(json!({
                "out": out,
                "runs": points.len(),
                "aggregate": out.join("aggregate.csv"),
            }))
        }
        Command::Oracle { config, seed, out, means, strategy, k, epochs, noise, window, cap } => {
            if let Some(means) = means {
                let means = means
                    .split(',')
                    .map(|m| m.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad mean {m:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                let strategy = Strategy::parse(&strategy)?;
                let cfg = OracleBanditConfig {
                    selection: SelectionConfig { strategy, k, lambda: 0.0, keep: (0..k).collect() },
                    window,
                    ucb_count: UcbCount::Window,
                    noise,
                    epochs,
                };
                let r = oracle_bandit(&means, &cfg, seed.unwrap_or(0))?;
                let n = r.regret.len();
                let tail = n.saturating_sub(1000)..n;
                if let Some(path) = &out {
                    std::fs::write(path, serde_json::to_string(&r)? + "\n")?;
                }
                return Ok(json!({
                    "epochs": epochs,
                    "warmup_epochs": r.warmup_epochs,
                    "cumulative_regret": r.cumulative_regret(),
                    "optimal_rate_last_1000": if n > 0 { Some(r.optimal_rate(tail)) } else { None },
                }));
            }
            let path = config.ok_or_else(|| Error::Config("oracle needs --config or --means".into()))?;
            let cfg = load(&path, seed)?;
            let env = cfg.validate()?;
            with_env!(&env, e => {
                let t = oracle_enumerate(e, cfg.gfn.beta, cap)?;
                if let Some(p) = &out {
                    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(p)?;
                    w.write_record(["terminal", "reward", "pi"])?;
                    for ((x, r), pi) in t.terminals.iter().zip(&t.rewards).zip(&t.pi) {
                        w.write_record([e.render(x), format!("{r:?}"), format!("{pi:?}")])?;
                    }
                    w.flush()?;
                }
                let best = cmab_gfn::bandit::top_k(&t.pi, 5.min(t.pi.len()));
                Ok(json!({
                    "env": e.name(),
                    "terminals": t.terminals.len(),
                    "beta": t.beta,
                    "log_z": t.log_z,
                    "top": best.iter().map(|&i| json!({"x": e.render(&t.terminals[i]), "pi": t.pi[i]})).collect::<Vec<_>>(),
                }))
            })
        }
        Command::Validate { config, seed } => {
            let cfg = load(&config, seed)?;
            let env = cfg.validate()?;
            let arms = with_env!(&env, e => e.alphabet_size().pow(cfg.bandit.arm_group as u32));
            Ok(json!({
                "ok": true,
                "config_hash": cfg.hash()?,
                "env": cfg.env.kind(),
                "arms": arms,
                "epochs": cfg.protocol_config().num_epochs(),
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let v = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{v}");
            ExitCode::FAILURE
        }
    }
}
