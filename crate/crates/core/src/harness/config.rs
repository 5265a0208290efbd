use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bandit::{Strategy, UcbCount};
use crate::env::bitseq::DEFAULT_PATTERNS;
use crate::env::fragment::FragmentSynth;
use crate::env::{BitSeqConfig, BitSeqEnv, Environment, FragmentConfig, FragmentEnv, SeqDesignConfig, SeqEnv};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gfn::TrainConfig;
use crate::policy::PolicyConfig;
use crate::protocol::ProtocolConfig;
use crate::rng::stream;

/// Largest seed a config file can hold (TOML integers are signed 64-bit).
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitSeqSpec {
    pub n: usize,
    pub k: usize,
    /// A sample hits a mode when its edit distance is below this.
    pub delta: usize,
    #[serde(default = "default_num_modes")]
    pub num_modes: usize,
    /// Base patterns concatenated into modes.
    #[serde(default = "default_patterns")]
    pub patterns: Vec<String>,
    /// Explicit mode set; overrides pattern sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<String>>,
}

fn default_num_modes() -> usize {
    10
}
fn default_patterns() -> Vec<String> {
    DEFAULT_PATTERNS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeqSpec {
    pub alphabet: usize,
    pub length: usize,
    #[serde(default = "default_num_peaks")]
    pub num_peaks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peaks: Option<Vec<String>>,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_radius")]
    pub mode_radius: usize,
}

fn default_num_peaks() -> usize {
    4
}
fn default_scale() -> f64 {
    1.0
}
fn default_radius() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvSpec {
    Bitseq(BitSeqSpec),
    Seq(SeqSpec),
    Fragment(FragmentSynth),
}

impl EnvSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvSpec::Bitseq(_) => "bitseq",
            EnvSpec::Seq(_) => "seq",
            EnvSpec::Fragment(_) => "fragment",
        }
    }

    /// Instantiates the environment; random parts draw from the `env`
    /// stream of `seed`.
    pub fn build(&self, seed: u64) -> Result<AnyEnv> {
        let mut rng = stream(seed, "env", 0, 0);
        Ok(match self {
            EnvSpec::Bitseq(s) => {
                let cfg = match &s.modes {
                    Some(m) => BitSeqConfig { n: s.n, k: s.k, modes: m.clone(), delta: s.delta },
                    None => BitSeqConfig::from_patterns(s.n, s.k, &s.patterns, s.num_modes, s.delta, &mut rng)?,
                };
                AnyEnv::BitSeq(BitSeqEnv::new(cfg)?)
            }
            EnvSpec::Seq(s) => {
                let mut cfg = match &s.peaks {
                    Some(p) => SeqDesignConfig {
                        alphabet: s.alphabet,
                        length: s.length,
                        peaks: p.clone(),
                        scale: s.scale,
                        mode_radius: s.mode_radius,
                    },
                    None => SeqDesignConfig::random_peaks(s.alphabet, s.length, s.num_peaks, s.scale, &mut rng)?,
                };
                cfg.mode_radius = s.mode_radius;
                AnyEnv::Seq(SeqEnv::new(cfg)?)
            }
            EnvSpec::Fragment(s) => AnyEnv::Fragment(FragmentEnv::new(FragmentConfig::synthetic(s, &mut rng)?)?),
        })
    }
}

/// A built environment of any supported kind.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    BitSeq(BitSeqEnv),
    Seq(SeqEnv),
    Fragment(FragmentEnv),
}

/// Calls `$body` with `$e` bound to the concrete environment.
#[macro_export]
macro_rules! with_env {
    ($any:expr, $e:ident => $body:expr) => {
        match $any {
            $crate::harness::AnyEnv::BitSeq($e) => $body,
            $crate::harness::AnyEnv::Seq($e) => $body,
            $crate::harness::AnyEnv::Fragment($e) => $body,
        }
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditSection {
    #[serde(default)]
    pub strategy: Strategy,
    pub k: usize,
    pub window: usize,
    pub alpha: f64,
    pub lambda: f64,
    #[serde(default)]
    pub ucb_count: UcbCount,
    #[serde(default = "one")]
    pub arm_group: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_prune_keep: Option<Vec<usize>>,
    #[serde(default = "default_norm_eps")]
    pub normalizer_eps: f64,
}

fn one() -> usize {
    1
}
fn default_norm_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub rounds: u64,
    pub interval: u64,
    pub eval_samples: usize,
    #[serde(default = "default_warmup_cap")]
    pub warmup_cap: u64,
    #[serde(default)]
    pub elbo_every: u64,
    #[serde(default = "default_elbo_samples")]
    pub elbo_samples: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Write the co-occurrence matrix every this many epochs (0 disables).
    #[serde(default)]
    pub cooccurrence_every: u64,
    #[serde(default = "yes")]
    pub checkpoint: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { cooccurrence_every: 0, checkpoint: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Seed of the environment instance; the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_seed: Option<u64>,
    #[serde(default)]
    pub execution: Execution,
    pub env: EnvSpec,
    #[serde(default)]
    pub policy: PolicyConfig,
    pub gfn: TrainConfig,
    pub bandit: BanditSection,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Hyperparameters that the sweep driver can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    K,
    Alpha,
    Lambda,
    Window,
    Beta,
    Strategy,
    Seed,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "K" | "k" => Axis::K,
            "alpha" => Axis::Alpha,
            "lambda" => Axis::Lambda,
            "H" | "window" => Axis::Window,
            "beta" => Axis::Beta,
            "strategy" => Axis::Strategy,
            "seed" => Axis::Seed,
            _ => return Err(Error::Config(format!("unknown sweep axis {s:?}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::K => "K",
            Axis::Alpha => "alpha",
            Axis::Lambda => "lambda",
            Axis::Window => "H",
            Axis::Beta => "beta",
            Axis::Strategy => "strategy",
            Axis::Seed => "seed",
        }
    }
}

fn parse_value<T: std::str::FromStr>(axis: Axis, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("bad value {v:?} for axis {}", axis.name())))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn env_seed(&self) -> u64 {
        self.env_seed.unwrap_or(self.seed)
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        let b = &self.bandit;
        let p = &self.protocol;
        ProtocolConfig {
            rounds: p.rounds,
            interval: p.interval,
            eval_samples: p.eval_samples,
            strategy: b.strategy,
            k: b.k,
            window: b.window,
            alpha: b.alpha,
            lambda: b.lambda,
            ucb_count: b.ucb_count,
            arm_group: b.arm_group,
            warmup_cap: p.warmup_cap,
            hard_prune_keep: b.hard_prune_keep.clone(),
            elbo_every: p.elbo_every,
            elbo_samples: p.elbo_samples,
            top_k: p.top_k,
            normalizer_eps: b.normalizer_eps,
        }
    }

    /// Full validation, including checks that need the built environment.
    pub fn validate(&self) -> Result<AnyEnv> {
        if self.seed > MAX_SEED || self.env_seed() > MAX_SEED {
            return Err(Error::Config(format!("seeds must be at most {MAX_SEED}")));
        }
        self.gfn.validate()?;
        if self.policy.hidden == 0 {
            return Err(Error::Config("policy.hidden must be >= 1".into()));
        }
        let env = self.env.build(self.env_seed())?;
        let proto = self.protocol_config();
        with_env!(&env, e => proto.validate(e).map(|_| ()))?;
        Ok(env)
    }

    pub fn set_axis(&mut self, axis: Axis, value: &str) -> Result<()> {
        match axis {
            Axis::K => self.bandit.k = parse_value(axis, value)?,
            Axis::Alpha => self.bandit.alpha = parse_value(axis, value)?,
            Axis::Lambda => self.bandit.lambda = parse_value(axis, value)?,
            Axis::Window => self.bandit.window = parse_value(axis, value)?,
            Axis::Beta => self.gfn.beta = parse_value(axis, value)?,
            Axis::Strategy => self.bandit.strategy = Strategy::parse(value.trim())?,
            Axis::Seed => self.seed = parse_value(axis, value)?,
        }
        Ok(())
    }
}

/// Minimum super-arm size of the built environment.
pub fn min_super_arm_size(env: &AnyEnv) -> usize {
    with_env!(env, e => e.min_super_arm_size())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BITSEQ: &str = r#"
seed = 3

[env]
kind = "bitseq"
n = 16
k = 4
delta = 2

[policy]
backend = "mlp"
hidden = 16

[gfn]
batch_size = 4
beta = 2.0
epsilon = 0.01
lr = 0.001
z_lr = 0.001

[bandit]
strategy = "cucb-greedy"
k = 4
window = 10
alpha = 0.1
lambda = 1.9

[protocol]
rounds = 20
interval = 5
eval_samples = 8
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = RunConfig::parse(BITSEQ).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.env.kind(), "bitseq");
        assert_eq!(c.policy.hidden, 16);
        assert_eq!(c.gfn.beta, 2.0);
        let text = c.to_toml().unwrap();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash().unwrap(), c.hash().unwrap());
        assert_eq!(c.hash().unwrap().len(), 64);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = BITSEQ.replace("window = 10", "window = 10\nwindw = 3");
        assert!(RunConfig::parse(&bad).is_err());
        let bad_env = BITSEQ.replace("delta = 2", "delta = 2\ncolor = 1");
        assert!(RunConfig::parse(&bad_env).is_err());
    }

    #[test]
    fn k_larger_than_arm_space_fails_validation() {
        let c = RunConfig::parse(&BITSEQ.replace("k = 4\nwindow", "k = 17\nwindow")).unwrap();
        assert!(matches!(c.validate(), Err(Error::KTooLarge { k: 17, n: 16 })));
    }

    #[test]
    fn axes_apply() {
        let mut c = RunConfig::parse(BITSEQ).unwrap();
        c.set_axis(Axis::parse("K").unwrap(), "2").unwrap();
        c.set_axis(Axis::parse("strategy").unwrap(), "random").unwrap();
        c.set_axis(Axis::parse("beta").unwrap(), "4").unwrap();
        c.set_axis(Axis::parse("H").unwrap(), "7").unwrap();
        assert_eq!((c.bandit.k, c.bandit.strategy, c.gfn.beta, c.bandit.window), (2, Strategy::Random, 4.0, 7));
        assert!(c.set_axis(Axis::Alpha, "x").is_err());
        assert!(Axis::parse("gamma").is_err());
    }

    #[test]
    fn env_instances_follow_env_seed() {
        let mut c = RunConfig::parse(BITSEQ).unwrap();
        let modes = |c: &RunConfig| match c.env.build(c.env_seed()).unwrap() {
            AnyEnv::BitSeq(e) => e.config().modes.clone(),
            _ => unreachable!(),
        };
        let a = modes(&c);
        c.seed = 99;
        c.env_seed = Some(3);
        assert_eq!(modes(&c), a);
    }
}
