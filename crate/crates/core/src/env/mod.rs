//! DAG-generation MDPs with decomposed actions.
//!
//! An [`Action`] is a pair of a state-dependent locator (where to act) and a
//! state-independent primitive choice (what to place). Bandit arms live over
//! primitive choices, or over length-`t` groups of consecutive choices when
//! composite arms are configured (see [`ArmSpace`]). A [`Restriction`] built
//! from a [`SuperArm`] masks the action set during sampling.

use std::collections::{HashSet, VecDeque};
use std::fmt::Debug;
use std::hash::Hash;

use crate::error::{Error, Result};

pub mod artifact;
pub mod bitseq;
pub mod distance;
pub mod fragment;
pub mod seq;

pub use bitseq::{BitSeqConfig, BitSeqEnv};
pub use fragment::{FragmentConfig, FragmentEnv, FragmentState};
pub use seq::{SeqDesignConfig, SeqEnv};

/// Index into the environment's primitive alphabet.
pub type ChoiceId = u32;

/// A decomposed action. Ordering is by locator, then choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action {
    pub locator: u32,
    pub choice: ChoiceId,
}

impl Action {
    pub fn new(locator: u32, choice: ChoiceId) -> Self {
        Self { locator, choice }
    }
}

/// A generation MDP over a finite DAG with fixed-horizon termination.
///
/// Implementations are immutable after construction and all methods are
/// pure, so a single environment can be shared across sampling workers.
pub trait Environment: Send + Sync {
    type State: Clone + Eq + Hash + Debug + Send + Sync;

    fn name(&self) -> &'static str;

    /// Size of the primitive alphabet `A_i`.
    fn alphabet_size(&self) -> usize;

    fn initial_state(&self) -> Self::State;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// The unrestricted action set `A_s`, sorted by (locator, choice).
    /// Empty for terminal states.
    fn legal_actions(&self, state: &Self::State) -> Vec<Action>;

    /// Successor of `state` under `action`; fails with
    /// [`Error::InvalidAction`] if the pair is not legal.
    fn apply(&self, state: &Self::State, action: Action) -> Result<Self::State>;

    /// Number of incoming edges of `state` in the unrestricted DAG.
    fn parent_count(&self, state: &Self::State) -> usize;

    /// Raw reward of a terminal state.
    fn reward(&self, state: &Self::State) -> Result<f64>;

    /// Length of the state feature vector consumed by the MLP policy.
    fn feature_dim(&self) -> usize;

    /// Writes the features of `state` into `out` (`out.len() == feature_dim()`).
    fn encode(&self, state: &Self::State, out: &mut [f64]);

    /// Number of policy output logits.
    fn output_dim(&self) -> usize;

    /// Output logit slot for `action` taken at `state`.
    fn output_index(&self, state: &Self::State, action: Action) -> usize;

    /// Upper bound on trajectory length.
    fn horizon(&self) -> usize;

    /// Mode rule. `found` holds exemplars of modes already recorded, in
    /// discovery order; rules based on similarity separation consult it.
    fn mode_of(&self, x: &Self::State, found: &[Self::State]) -> Option<u64>;

    /// Similarity in `[0, 1]`, symmetric, with `similarity(a, a) == 1`.
    fn similarity(&self, a: &Self::State, b: &Self::State) -> f64;

    /// Human-readable rendering used in CSV/JSON outputs.
    fn render(&self, state: &Self::State) -> String;

    /// Key-value description of the instance (mode sets, tables).
    fn artifact(&self) -> Vec<(String, String)>;

    /// Smallest super-arm size that keeps every reachable state non-empty.
    fn min_super_arm_size(&self) -> usize {
        1
    }
}

/// The bandit arm space: composites of `group` consecutive primitive choices
/// over an alphabet of `base` symbols. `group == 1` is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArmSpace {
    base: usize,
    group: usize,
}

impl ArmSpace {
    pub fn new(base: usize, group: usize) -> Result<Self> {
        if base == 0 || group == 0 {
            return Err(Error::Config("arm space needs base >= 1 and group >= 1".into()));
        }
        let n = (base as u128).checked_pow(group as u32);
        match n {
            Some(n) if n <= 1 << 20 => Ok(Self { base, group }),
            _ => Err(Error::Config(format!("composite alphabet {base}^{group} is too large"))),
        }
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn group(&self) -> usize {
        self.group
    }

    pub fn num_arms(&self) -> usize {
        self.base.pow(self.group as u32)
    }

    /// Composite id of a full group, most significant choice first.
    pub fn composite_id(&self, choices: &[ChoiceId]) -> usize {
        debug_assert_eq!(choices.len(), self.group);
        choices.iter().fold(0usize, |acc, &c| acc * self.base + c as usize)
    }

    /// Choices making up composite `arm`.
    pub fn decompose(&self, mut arm: usize) -> Vec<ChoiceId> {
        let mut out = vec![0; self.group];
        for slot in out.iter_mut().rev() {
            *slot = (arm % self.base) as ChoiceId;
            arm /= self.base;
        }
        out
    }

    /// Arms completed by a choice sequence: every full group, in order.
    /// A trailing partial group contributes nothing.
    pub fn project(&self, choices: &[ChoiceId]) -> Vec<usize> {
        choices.chunks_exact(self.group).map(|g| self.composite_id(g)).collect()
    }

    /// Distinct arms contained in a choice sequence, sorted.
    pub fn arms_in(&self, choices: &[ChoiceId]) -> Vec<usize> {
        let mut arms = self.project(choices);
        arms.sort_unstable();
        arms.dedup();
        arms
    }
}

/// A super arm: either the `ALL` sentinel or a sorted set of distinct arm ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SuperArm {
    All,
    Subset(Vec<usize>),
}

impl SuperArm {
    pub fn subset(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        SuperArm::Subset(members)
    }

    pub fn contains(&self, arm: usize) -> bool {
        match self {
            SuperArm::All => true,
            SuperArm::Subset(m) => m.binary_search(&arm).is_ok(),
        }
    }

    pub fn members(&self) -> Option<&[usize]> {
        match self {
            SuperArm::All => None,
            SuperArm::Subset(m) => Some(m),
        }
    }

    /// `ALL` or ids joined by `;`.
    pub fn label(&self) -> String {
        match self {
            SuperArm::All => "ALL".to_string(),
            SuperArm::Subset(m) => m.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";"),
        }
    }
}

impl serde::Serialize for SuperArm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

/// Position inside the current composite group of a partially built trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupCursor {
    value: usize,
    len: usize,
}

impl GroupCursor {
    /// Advances by one choice; returns the completed arm if the group closes.
    pub fn advance(&mut self, space: &ArmSpace, choice: ChoiceId) -> Option<usize> {
        self.value = self.value * space.base + choice as usize;
        self.len += 1;
        if self.len == space.group {
            let arm = self.value;
            *self = GroupCursor::default();
            Some(arm)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Compiled action mask for a super arm.
///
/// A choice is legal when the pending composite prefix extended by it is a
/// prefix of at least one permitted composite.
#[derive(Debug, Clone)]
pub struct Restriction {
    space: ArmSpace,
    super_arm: SuperArm,
    // prefixes[j][v]: the length-(j+1) prefix with value v extends a member
    prefixes: Option<Vec<Vec<bool>>>,
}

impl Restriction {
    pub fn new(space: ArmSpace, super_arm: SuperArm) -> Result<Self> {
        let prefixes = match &super_arm {
            SuperArm::All => None,
            SuperArm::Subset(members) => {
                let n = space.num_arms();
                if let Some(&bad) = members.iter().find(|&&a| a >= n) {
                    return Err(Error::Config(format!("arm id {bad} outside 0..{n}")));
                }
                let mut tables = Vec::with_capacity(space.group);
                for j in 0..space.group {
                    let width = space.base.pow((j + 1) as u32);
                    let shift = space.base.pow((space.group - j - 1) as u32);
                    let mut t = vec![false; width];
                    for &m in members {
                        t[m / shift] = true;
                    }
                    tables.push(t);
                }
                Some(tables)
            }
        };
        Ok(Self { space, super_arm, prefixes })
    }

    pub fn all(space: ArmSpace) -> Self {
        Self { space, super_arm: SuperArm::All, prefixes: None }
    }

    pub fn space(&self) -> &ArmSpace {
        &self.space
    }

    pub fn super_arm(&self) -> &SuperArm {
        &self.super_arm
    }

    pub fn is_all(&self) -> bool {
        self.prefixes.is_none()
    }

    /// Whether `choice` may follow the pending prefix held by `cursor`.
    pub fn permits(&self, cursor: &GroupCursor, choice: ChoiceId) -> bool {
        match &self.prefixes {
            None => true,
            Some(t) => {
                let v = cursor.value * self.space.base + choice as usize;
                t[cursor.len].get(v).copied().unwrap_or(false)
            }
        }
    }

    /// Legality mask over `actions`.
    pub fn mask(&self, cursor: &GroupCursor, actions: &[Action]) -> Vec<bool> {
        actions.iter().map(|a| self.permits(cursor, a.choice)).collect()
    }
}

/// `A_s` filtered by the restriction, in canonical order.
pub fn available_actions<E: Environment>(
    env: &E,
    state: &E::State,
    restriction: &Restriction,
    cursor: &GroupCursor,
) -> Result<Vec<Action>> {
    if env.is_terminal(state) {
        return Err(Error::TerminalState);
    }
    let actions: Vec<Action> =
        env.legal_actions(state).into_iter().filter(|a| restriction.permits(cursor, a.choice)).collect();
    if actions.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    Ok(actions)
}

/// Exhaustive listing of a finite state space in BFS order.
#[derive(Debug, Clone)]
pub struct StateSpace<S> {
    pub nonterminal: Vec<S>,
    pub terminal: Vec<S>,
}

/// Enumerates every reachable state; fails with [`Error::TooLarge`] once more
/// than `cap` states have been seen.
pub fn enumerate_states<E: Environment>(env: &E, cap: usize) -> Result<StateSpace<E::State>> {
    let s0 = env.initial_state();
    let mut seen: HashSet<E::State> = HashSet::new();
    let mut queue = VecDeque::new();
    let mut out = StateSpace { nonterminal: Vec::new(), terminal: Vec::new() };
    seen.insert(s0.clone());
    queue.push_back(s0);
    while let Some(s) = queue.pop_front() {
        if env.is_terminal(&s) {
            out.terminal.push(s);
            continue;
        }
        for a in env.legal_actions(&s) {
            let next = env.apply(&s, a)?;
            if !seen.contains(&next) {
                if seen.len() >= cap {
                    return Err(Error::TooLarge(cap));
                }
                seen.insert(next.clone());
                queue.push_back(next);
            }
        }
        out.nonterminal.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_projection() {
        let space = ArmSpace::new(4, 1).unwrap();
        assert_eq!(space.project(&[3]), vec![3]);
        assert_eq!(space.num_arms(), 4);
    }

    #[test]
    fn four_bit_composites_over_binary_alphabet() {
        let space = ArmSpace::new(2, 4).unwrap();
        assert_eq!(space.num_arms(), 16);
        assert_eq!(space.project(&[0, 0, 1, 1, 1, 1, 1, 1, 0]), vec![3, 15]);
        assert_eq!(space.decompose(3), vec![0, 0, 1, 1]);
    }

    // tokens A=0 C=1 G=2 U=3
    #[test]
    fn composite_prefix_legality() {
        let space = ArmSpace::new(4, 2).unwrap();
        let ga = space.composite_id(&[2, 0]);
        let cc = space.composite_id(&[1, 1]);
        let uu = space.composite_id(&[3, 3]);
        let fresh = GroupCursor::default();

        let r = Restriction::new(space, SuperArm::subset(vec![ga, cc])).unwrap();
        assert!(r.permits(&fresh, 2));
        let r = Restriction::new(space, SuperArm::subset(vec![cc, uu])).unwrap();
        assert!(!r.permits(&fresh, 2));
    }

    #[test]
    fn second_position_respects_prefix() {
        let space = ArmSpace::new(4, 2).unwrap();
        let ga = space.composite_id(&[2, 0]);
        let r = Restriction::new(space, SuperArm::subset(vec![ga])).unwrap();
        let mut cur = GroupCursor::default();
        assert_eq!(cur.advance(&space, 2), None);
        assert!(r.permits(&cur, 0));
        assert!(!r.permits(&cur, 1));
        assert_eq!(cur.advance(&space, 0), Some(ga));
        assert!(cur.is_empty());
    }

    #[test]
    fn out_of_range_member_rejected() {
        let space = ArmSpace::new(2, 1).unwrap();
        assert!(Restriction::new(space, SuperArm::subset(vec![2])).is_err());
    }

    #[test]
    fn all_sentinel_label() {
        assert_eq!(SuperArm::All.label(), "ALL");
        assert_eq!(SuperArm::subset(vec![5, 1]).label(), "1;5");
    }
}
