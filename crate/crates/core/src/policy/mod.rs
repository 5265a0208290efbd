//! Forward policy `P_F(.|s; θ)` with its `log Z` scalar, the uniform
//! backward policy, and the optimizer.
//!
//! Two backends share one interface: a tabular policy with one logit per
//! (state, action) of an enumerable environment, and a two-hidden-layer MLP
//! over the environment's one-hot state encoding. Logits are computed over
//! the full action set `A_s`; masking by the active restriction happens in
//! the log-softmax.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::{enumerate_states, Action, Environment};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub mod adam;
pub mod mlp;

pub use adam::{AdamConfig, OptimizerState};
use mlp::{Activations, MlpShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Tabular,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub backend: BackendKind,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Half-width of the uniform initialization of MLP parameters.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    /// State cap for the tabular backend's enumeration.
    #[serde(default = "default_max_states")]
    pub max_states: usize,
}

fn default_hidden() -> usize {
    256
}
fn default_init_scale() -> f64 {
    0.01
}
fn default_max_states() -> usize {
    1_000_000
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mlp,
            hidden: default_hidden(),
            init_scale: default_init_scale(),
            max_states: default_max_states(),
        }
    }
}

#[derive(Debug, Clone)]
enum Backend<S> {
    /// `offsets[state]` is the first logit of that state's `A_s`.
    Tabular {
        offsets: HashMap<S, usize>,
    },
    Mlp {
        shape: MlpShape,
    },
}

#[derive(Debug, Clone)]
pub struct PolicyModel<S> {
    backend: Backend<S>,
    params: Vec<f64>,
    pub log_z: f64,
}

/// Per-state cache needed to backpropagate through one policy evaluation.
#[derive(Debug, Clone)]
pub enum StepCache {
    Tabular { offset: usize },
    Mlp { x: Vec<f64>, act: Activations, rows: Vec<usize> },
}

/// Log-softmax over legal entries; masked entries get `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    let max = logits.iter().zip(mask).filter(|(_, &m)| m).map(|(&l, _)| l).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllMasked);
    }
    let sum: f64 = logits.iter().zip(mask).filter(|(_, &m)| m).map(|(&l, _)| (l - max).exp()).sum();
    let lse = max + sum.ln();
    Ok(logits.iter().zip(mask).map(|(&l, &m)| if m { l - lse } else { f64::NEG_INFINITY }).collect())
}

impl<S: Clone + Eq + std::hash::Hash> PolicyModel<S> {
    /// Tabular policy over every non-terminal state of `env`, zero logits.
    pub fn tabular<E: Environment<State = S>>(env: &E, max_states: usize) -> Result<Self> {
        let space = enumerate_states(env, max_states)?;
        let mut offsets = HashMap::with_capacity(space.nonterminal.len());
        let mut total = 0;
        for s in space.nonterminal {
            let n = env.legal_actions(&s).len();
            offsets.insert(s, total);
            total += n;
        }
        Ok(Self { backend: Backend::Tabular { offsets }, params: vec![0.0; total], log_z: 0.0 })
    }

    /// MLP policy with parameters uniform in `[-init_scale, init_scale]`.
    pub fn mlp<E: Environment<State = S>>(env: &E, hidden: usize, init_scale: f64, rng: &mut Rng) -> Self {
        let shape = MlpShape { input: env.feature_dim(), hidden, output: env.output_dim() };
        Self { params: mlp::init_params(shape, init_scale, rng), backend: Backend::Mlp { shape }, log_z: 0.0 }
    }

    pub fn from_config<E: Environment<State = S>>(env: &E, cfg: &PolicyConfig, rng: &mut Rng) -> Result<Self> {
        match cfg.backend {
            BackendKind::Tabular => Self::tabular(env, cfg.max_states),
            BackendKind::Mlp => Ok(Self::mlp(env, cfg.hidden, cfg.init_scale, rng)),
        }
    }

    pub fn kind(&self) -> BackendKind {
        match self.backend {
            Backend::Tabular { .. } => BackendKind::Tabular,
            Backend::Mlp { .. } => BackendKind::Mlp,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Tabular logit offset of `state`, if it is a known non-terminal state.
    pub fn tabular_offset(&self, state: &S) -> Option<usize> {
        match &self.backend {
            Backend::Tabular { offsets } => offsets.get(state).copied(),
            Backend::Mlp { .. } => None,
        }
    }

    /// Raw logits over `actions` (which must be `env.legal_actions(state)`)
    /// plus the cache for a later reverse pass.
    pub fn logits_cached<E: Environment<State = S>>(
        &self,
        env: &E,
        state: &S,
        actions: &[Action],
    ) -> Result<(Vec<f64>, StepCache)> {
        match &self.backend {
            Backend::Tabular { offsets } => {
                let &offset =
                    offsets.get(state).ok_or_else(|| Error::InvalidAction("state unknown to tabular policy".into()))?;
                let logits = self.params[offset..offset + actions.len()].to_vec();
                Ok((logits, StepCache::Tabular { offset }))
            }
            Backend::Mlp { shape } => {
                let mut x = vec![0.0; shape.input];
                env.encode(state, &mut x);
                let act = mlp::hidden(*shape, &self.params, &x);
                let rows: Vec<usize> = actions.iter().map(|&a| env.output_index(state, a)).collect();
                let logits = mlp::outputs(*shape, &self.params, &act, &rows);
                Ok((logits, StepCache::Mlp { x, act, rows }))
            }
        }
    }

    pub fn logits<E: Environment<State = S>>(&self, env: &E, state: &S, actions: &[Action]) -> Result<Vec<f64>> {
        self.logits_cached(env, state, actions).map(|(l, _)| l)
    }

    /// Masked log-probabilities over `env.legal_actions(state)`.
    pub fn forward_logits<E: Environment<State = S>>(&self, env: &E, state: &S, mask: &[bool]) -> Result<Vec<f64>> {
        if env.is_terminal(state) {
            return Err(Error::TerminalState);
        }
        let actions = env.legal_actions(state);
        masked_log_softmax(&self.logits(env, state, &actions)?, mask)
    }

    /// Accumulates `sum_j dlogits[j] * d(logit_j)/dθ` into `grad`.
    pub fn backward(&self, cache: &StepCache, dlogits: &[f64], grad: &mut Gradient) {
        match (&self.backend, cache) {
            (Backend::Tabular { .. }, StepCache::Tabular { offset }) => {
                for (j, &d) in dlogits.iter().enumerate() {
                    if d != 0.0 {
                        grad.add(offset + j, d);
                    }
                }
            }
            (Backend::Mlp { shape }, StepCache::Mlp { x, act, rows }) => {
                let dense = grad.dense_mut();
                mlp::backward(*shape, &self.params, x, act, rows, dlogits, dense);
            }
            _ => unreachable!("cache from a different backend"),
        }
    }

    pub fn zero_gradient(&self) -> Gradient {
        match self.backend {
            Backend::Tabular { .. } => {
                Gradient { entries: GradEntries::Sparse(Vec::new()), len: self.params.len(), log_z: 0.0 }
            }
            Backend::Mlp { .. } => Gradient {
                entries: GradEntries::Dense(vec![0.0; self.params.len()]),
                len: self.params.len(),
                log_z: 0.0,
            },
        }
    }

    /// Text checkpoint; see [`PolicyModel::load_params`].
    pub fn checkpoint(&self) -> String {
        let mut out = String::from("cmab-gfn-policy 1\n");
        match &self.backend {
            Backend::Tabular { .. } => out.push_str("backend tabular\n"),
            Backend::Mlp { shape } => {
                let _ = writeln!(out, "backend mlp {} {} {}", shape.input, shape.hidden, shape.output);
            }
        }
        let _ = writeln!(out, "log_z {:016x}", self.log_z.to_bits());
        let _ = writeln!(out, "params {}", self.params.len());
        for p in &self.params {
            let _ = writeln!(out, "{:016x}", p.to_bits());
        }
        out
    }

    /// Restores parameters written by [`PolicyModel::checkpoint`] into a
    /// model built for the same environment and backend.
    ///
    /// Format: a `cmab-gfn-policy 1` header, a `backend` line (`tabular`, or
    /// `mlp <input> <hidden> <output>`), `log_z <bits>`, `params <count>`,
    /// then one IEEE-754 bit pattern per line as 16 hex digits. Tabular
    /// parameters follow the BFS state order of the environment.
    pub fn load_params(&mut self, text: &str) -> Result<()> {
        let bad = |m: &str| Error::Artifact(format!("checkpoint: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some("cmab-gfn-policy 1") {
            return Err(bad("unknown header"));
        }
        let backend = lines.next().ok_or_else(|| bad("missing backend"))?;
        let expected = match &self.backend {
            Backend::Tabular { .. } => "backend tabular".to_string(),
            Backend::Mlp { shape } => format!("backend mlp {} {} {}", shape.input, shape.hidden, shape.output),
        };
        if backend != expected {
            return Err(bad("backend mismatch"));
        }
        let hex = |s: &str| u64::from_str_radix(s, 16).map(f64::from_bits).map_err(|_| bad("bad number"));
        let log_z =
            lines.next().and_then(|l| l.strip_prefix("log_z ")).ok_or_else(|| bad("missing log_z")).and_then(hex)?;
        let count: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("params "))
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| bad("missing params"))?;
        if count != self.params.len() {
            return Err(bad("parameter count mismatch"));
        }
        let params = lines.take(count).map(hex).collect::<Result<Vec<_>>>()?;
        if params.len() != count {
            return Err(bad("truncated"));
        }
        self.params = params;
        self.log_z = log_z;
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum GradEntries {
    Dense(Vec<f64>),
    Sparse(Vec<(usize, f64)>),
}

/// Gradient of a loss with respect to θ and `log Z`.
#[derive(Debug, Clone)]
pub struct Gradient {
    entries: GradEntries,
    len: usize,
    pub log_z: f64,
}

impl Gradient {
    fn add(&mut self, i: usize, v: f64) {
        match &mut self.entries {
            GradEntries::Dense(d) => d[i] += v,
            GradEntries::Sparse(s) => s.push((i, v)),
        }
    }

    fn dense_mut(&mut self) -> &mut [f64] {
        if let GradEntries::Sparse(s) = &self.entries {
            let mut d = vec![0.0; self.len];
            for &(i, v) in s {
                d[i] += v;
            }
            self.entries = GradEntries::Dense(d);
        }
        match &mut self.entries {
            GradEntries::Dense(d) => d,
            GradEntries::Sparse(_) => unreachable!(),
        }
    }

    /// Adds `other` into `self`, in entry order.
    pub fn accumulate(&mut self, other: &Gradient) {
        self.log_z += other.log_z;
        match (&mut self.entries, &other.entries) {
            (GradEntries::Dense(a), GradEntries::Dense(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            (_, GradEntries::Sparse(b)) => {
                for &(i, v) in b {
                    self.add(i, v);
                }
            }
            (GradEntries::Sparse(_), GradEntries::Dense(b)) => {
                let a = self.dense_mut();
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
        }
    }

    /// Dense copy of the θ part.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.entries {
            GradEntries::Dense(d) => d.clone(),
            GradEntries::Sparse(s) => {
                let mut d = vec![0.0; self.len];
                for &(i, v) in s {
                    d[i] += v;
                }
                d
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.log_z.is_finite()
            && match &self.entries {
                GradEntries::Dense(d) => d.iter().all(|x| x.is_finite()),
                GradEntries::Sparse(s) => s.iter().all(|(_, v)| v.is_finite()),
            }
    }

    /// Euclidean norm over θ and `log Z`.
    pub fn norm(&self) -> f64 {
        let d = self.to_dense();
        (d.iter().map(|x| x * x).sum::<f64>() + self.log_z * self.log_z).sqrt()
    }
}

/// Applies one optimizer step; fails without touching the model if the
/// gradient has a non-finite component.
pub fn optimizer_step<S: Clone + Eq + std::hash::Hash>(
    opt: &mut OptimizerState,
    model: &mut PolicyModel<S>,
    grad: &Gradient,
) -> Result<()> {
    if !grad.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    let dense = grad.to_dense();
    let mut log_z = model.log_z;
    opt.step(&mut model.params, &mut log_z, &dense, grad.log_z);
    model.log_z = log_z;
    Ok(())
}

/// Uniform backward policy: `-ln(number of incoming edges)`.
pub fn backward_logprob<E: Environment>(env: &E, state: &E::State) -> f64 {
    let n = env.parent_count(state);
    debug_assert!(n > 0, "initial state has no parents");
    -(n.max(1) as f64).ln()
}

/// A sampled action with its index in `A_s` and its policy log-probability.
#[derive(Debug, Clone, Copy)]
pub struct Sampled {
    pub index: usize,
    pub action: Action,
    pub log_pf: f64,
}

/// Draws an action from the ε-mixture of the masked policy and the uniform
/// distribution over legal actions.
///
/// Consumes exactly two `f64` draws from `rng`: the first decides between
/// exploration and the policy, the second selects the action.
pub fn sample_from(
    actions: &[Action],
    log_probs: &[f64],
    mask: &[bool],
    epsilon: f64,
    rng: &mut Rng,
) -> Result<Sampled> {
    let explore = rng.gen::<f64>() < epsilon;
    let u = rng.gen::<f64>();
    let legal: Vec<usize> = (0..actions.len()).filter(|&i| mask[i]).collect();
    if legal.is_empty() {
        return Err(Error::AllMasked);
    }
    let index = if explore {
        legal[((u * legal.len() as f64) as usize).min(legal.len() - 1)]
    } else {
        let mut acc = 0.0;
        let mut pick = *legal.last().expect("non-empty");
        for &i in &legal {
            acc += log_probs[i].exp();
            if u < acc {
                pick = i;
                break;
            }
        }
        pick
    };
    Ok(Sampled { index, action: actions[index], log_pf: log_probs[index] })
}

/// [`sample_from`] after evaluating the policy at `state`.
pub fn sample_action<E: Environment>(
    model: &PolicyModel<E::State>,
    env: &E,
    state: &E::State,
    mask: &[bool],
    epsilon: f64,
    rng: &mut Rng,
) -> Result<Sampled> {
    let actions = env.legal_actions(state);
    let lp = model.forward_logits(env, state, mask)?;
    sample_from(&actions, &lp, mask, epsilon, rng)
}
