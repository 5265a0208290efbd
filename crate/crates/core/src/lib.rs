//! Bandit-guided GFlowNet training.
//!
//! A GFlowNet is trained with the trajectory-balance objective on a DAG
//! generation MDP whose actions decompose into a state-dependent locator and
//! a state-independent primitive choice. A combinatorial UCB bandit picks, at
//! every decision interval, a K-subset of primitive choices (a super arm);
//! training trajectories are restricted to that subset while unrestricted
//! evaluation batches feed the bandit statistics.
//!
//! Module map:
//!
//! * [`env`] - MDP abstraction, arm projection, and the three environments.
//! * [`policy`] - tabular and MLP forward policies, uniform backward policy, Adam.
//! * [`gfn`] - trajectory sampling, TB loss, training rounds, ELBO.
//! * [`bandit`] - windowed arm statistics, UCB, co-occurrence, super-arm selection.
//! * [`protocol`] - the epoch loop tying training, evaluation and the bandit together.
//! * [`metrics`] - modes, top-K tracking, empirical regret.
//! * [`harness`] - configuration, run directories, sweeps and brute-force oracles.

// Float checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod env;
pub mod error;
pub mod exec;
pub mod gfn;
pub mod harness;
pub mod metrics;
pub mod policy;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};
