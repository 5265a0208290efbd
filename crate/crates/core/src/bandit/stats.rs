use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Online min-max normalization of raw rewards into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardNormalizer {
    min: Option<f64>,
    max: Option<f64>,
    eps: f64,
}

impl Default for RewardNormalizer {
    fn default() -> Self {
        Self::new(1e-8)
    }
}

impl RewardNormalizer {
    pub fn new(eps: f64) -> Self {
        Self { min: None, max: None, eps }
    }

    /// Normalizer with fixed initial extrema.
    pub fn with_range(min: f64, max: f64, eps: f64) -> Self {
        Self { min: Some(min), max: Some(max), eps }
    }

    pub fn observe(&mut self, r: f64) {
        self.min = Some(self.min.map_or(r, |m| m.min(r)));
        self.max = Some(self.max.map_or(r, |m| m.max(r)));
    }

    pub fn extrema(&self) -> Option<(f64, f64)> {
        Some((self.min?, self.max?))
    }

    /// `clip((R - R_min) / (R_max - R_min + eps), 0, 1)`; `0` before any
    /// reward has been observed.
    pub fn normalize(&self, r: f64) -> f64 {
        match self.extrema() {
            Some((lo, hi)) => ((r - lo) / (hi - lo + self.eps)).clamp(0.0, 1.0),
            None => 0.0,
        }
    }
}

/// Which count enters the UCB bonus denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UcbCount {
    /// Current buffer occupancy `|B_i|`.
    #[default]
    Window,
    /// Total number of pushes.
    Cumulative,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ArmWindow {
    buffer: VecDeque<f64>,
    pushes: u64,
    mean: f64,
}

/// Per-arm sliding-window reward statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmStats {
    window: usize,
    count: UcbCount,
    arms: Vec<ArmWindow>,
}

impl ArmStats {
    pub fn new(num_arms: usize, window: usize, count: UcbCount) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("window size H must be >= 1".into()));
        }
        Ok(Self { window, count, arms: vec![ArmWindow::default(); num_arms] })
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// FIFO-appends `x` to arm `i`, evicting beyond the window.
    pub fn push(&mut self, i: usize, x: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfRange(x));
        }
        let arm = &mut self.arms[i];
        arm.buffer.push_back(x);
        if arm.buffer.len() > self.window {
            arm.buffer.pop_front();
        }
        arm.pushes += 1;
        arm.mean = arm.buffer.iter().sum::<f64>() / arm.buffer.len() as f64;
        Ok(())
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.arms[i].mean
    }

    pub fn means(&self) -> Vec<f64> {
        self.arms.iter().map(|a| a.mean).collect()
    }

    pub fn buffer(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.arms[i].buffer.iter().copied()
    }

    pub fn pushes(&self, i: usize) -> u64 {
        self.arms[i].pushes
    }

    /// `T_i` as configured by [`UcbCount`].
    pub fn count(&self, i: usize) -> u64 {
        match self.count {
            UcbCount::Window => self.arms[i].buffer.len() as u64,
            UcbCount::Cumulative => self.arms[i].pushes,
        }
    }

    pub fn cold_arms(&self) -> Vec<usize> {
        (0..self.arms.len()).filter(|&i| self.arms[i].pushes == 0).collect()
    }

    pub fn is_warm(&self) -> bool {
        self.arms.iter().all(|a| a.pushes > 0)
    }

    /// `μ̂_i + sqrt(3 ln t / (2 T_i))`.
    pub fn ucb(&self, i: usize, t: u64) -> Result<f64> {
        let n = self.count(i);
        if n == 0 {
            return Err(Error::ColdArm(i));
        }
        Ok(ucb_value(self.mean(i), n, t))
    }

    pub fn ucb_all(&self, t: u64) -> Result<Vec<f64>> {
        (0..self.arms.len()).map(|i| self.ucb(i, t)).collect()
    }
}

pub fn ucb_value(mean: f64, count: u64, t: u64) -> f64 {
    let t = t.max(1) as f64;
    mean + (3.0 * t.ln() / (2.0 * count as f64)).sqrt()
}

/// Mean normalized reward of the candidates containing each arm.
///
/// Each candidate is given as its distinct arms and its normalized reward.
/// Arms contained in no candidate are absent.
pub fn arm_rewards_from_batch<'a, I>(candidates: I) -> BTreeMap<usize, f64>
where
    I: IntoIterator<Item = (&'a [usize], f64)>,
{
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (arms, r) in candidates {
        for &a in arms {
            let e = acc.entry(a).or_insert((0.0, 0));
            e.0 += r;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(a, (s, n))| (a, s / n as f64)).collect()
}

/// Largest arm space for which a dense `N x N` matrix is kept.
pub const MAX_COOCCURRENCE_ARMS: usize = 4096;

/// Reward-weighted co-occurrence EMA over arm pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CoOccurrence {
    n: usize,
    alpha: f64,
    w: Vec<f64>,
}

impl CoOccurrence {
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config("co-occurrence rate alpha must lie in [0, 1]".into()));
        }
        if n > MAX_COOCCURRENCE_ARMS {
            return Err(Error::TooLarge(n));
        }
        Ok(Self { n, alpha, w: vec![0.0; n * n] })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.w[i * self.n + j] = v;
        self.w[j * self.n + i] = v;
    }

    /// One candidate update: every off-diagonal pair decays by `1 - α`,
    /// and pairs both present in `arms` gain `α·r`.
    pub fn update(&mut self, arms: &[usize], r: f64) {
        if self.alpha == 0.0 {
            return;
        }
        let keep = 1.0 - self.alpha;
        let mut present = vec![false; self.n];
        for &a in arms {
            present[a] = true;
        }
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let add = if present[i] && present[j] { self.alpha * r } else { 0.0 };
                let v = keep * self.get(i, j) + add;
                self.set(i, j, v);
            }
        }
    }

    /// Rows as CSV lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format!("{}", self.get(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_hand_values() {
        let n = RewardNormalizer::with_range(0.0, 10.0, 1e-8);
        assert!((n.normalize(5.0) - 5.0 / (10.0 + 1e-8)).abs() < 1e-15);
        assert!((n.normalize(5.0) - 0.4999999995).abs() < 1e-12);
        assert_eq!(n.normalize(0.0), 0.0);
        assert_eq!(n.normalize(11.0), 1.0);
        assert_eq!(n.normalize(-1.0), 0.0);
        assert_eq!(RewardNormalizer::default().normalize(3.0), 0.0);
    }

    #[test]
    fn normalizer_tracks_extrema() {
        let mut n = RewardNormalizer::default();
        for r in [3.0, 1.0, 7.0, 2.0] {
            n.observe(r);
        }
        assert_eq!(n.extrema(), Some((1.0, 7.0)));
    }

    #[test]
    fn window_trace() {
        let mut s = ArmStats::new(1, 3, UcbCount::Window).unwrap();
        for x in [0.1, 0.2, 0.3, 0.4] {
            s.push(0, x).unwrap();
        }
        assert_eq!(s.buffer(0).collect::<Vec<_>>(), vec![0.2, 0.3, 0.4]);
        assert!((s.mean(0) - 0.3).abs() < 1e-12);
        assert_eq!(s.pushes(0), 4);
        assert_eq!(s.count(0), 3);
        let mut c = ArmStats::new(1, 3, UcbCount::Cumulative).unwrap();
        c.push(0, 0.7).unwrap();
        assert_eq!(c.mean(0), 0.7);
        assert_eq!(c.count(0), 1);
        assert!(matches!(c.push(0, 1.5), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn ucb_hand_values() {
        let mut s = ArmStats::new(2, 10, UcbCount::Window).unwrap();
        for _ in 0..3 {
            s.push(0, 0.5).unwrap();
        }
        assert!((s.ucb(0, 100).unwrap() - 2.0174271293851464).abs() < 1e-12);
        assert_eq!(s.ucb(0, 1).unwrap(), 0.5);
        assert!(matches!(s.ucb(1, 5), Err(Error::ColdArm(1))));
        assert_eq!(s.cold_arms(), vec![1]);
    }

    #[test]
    fn arm_reward_means() {
        let a: &[usize] = &[0, 1];
        let b: &[usize] = &[0];
        let c: &[usize] = &[1];
        let x = arm_rewards_from_batch([(a, 0.2), (b, 0.6), (c, 0.9)]);
        assert!((x[&0] - 0.4).abs() < 1e-12);
        assert!((x[&1] - 0.55).abs() < 1e-12);
        assert!(!x.contains_key(&2));
    }

    #[test]
    fn cooccurrence_hand_values() {
        let mut w = CoOccurrence::new(3, 0.1).unwrap();
        w.update(&[0, 2], 0.8);
        assert!((w.get(0, 2) - 0.08).abs() < 1e-12);
        assert_eq!(w.get(2, 0), w.get(0, 2));
        assert_eq!(w.get(0, 1), 0.0);
        for _ in 0..200 {
            w.update(&[1], 1.0);
        }
        assert!(w.get(0, 2) < 1e-10);
        let mut frozen = CoOccurrence::new(3, 0.0).unwrap();
        frozen.update(&[0, 1, 2], 1.0);
        assert_eq!(frozen.get(0, 1), 0.0);
    }

    proptest! {
        #[test]
        fn window_mean_is_exact(xs in prop::collection::vec(0.0f64..=1.0, 1..60), h in 1usize..10) {
            let mut s = ArmStats::new(1, h, UcbCount::Cumulative).unwrap();
            for &x in &xs {
                s.push(0, x).unwrap();
            }
            let tail = &xs[xs.len().saturating_sub(h)..];
            let expect = tail.iter().sum::<f64>() / tail.len() as f64;
            prop_assert!((s.mean(0) - expect).abs() < 1e-12);
            prop_assert_eq!(s.pushes(0), xs.len() as u64);
            prop_assert!(s.pushes(0) >= s.buffer(0).count() as u64);
        }

        #[test]
        fn ucb_monotone(mean in 0.0f64..=1.0, n in 1u64..1000, t in 2u64..100_000) {
            prop_assert!(ucb_value(mean, n, t + 1) > ucb_value(mean, n, t));
            prop_assert!(ucb_value(mean, n + 1, t) < ucb_value(mean, n, t));
        }

        #[test]
        fn identity_normalization(r in 0.0f64..=1.0) {
            let n = RewardNormalizer::with_range(0.0, 1.0, 1e-8);
            prop_assert!((n.normalize(r) - r).abs() <= 1e-8);
        }

        #[test]
        fn cooccurrence_stays_symmetric_and_bounded(
            updates in prop::collection::vec((prop::collection::vec(0usize..6, 0..6), 0.0f64..=1.0), 0..40),
            alpha in 0.0f64..=1.0,
        ) {
            let mut w = CoOccurrence::new(6, alpha).unwrap();
            for (arms, r) in &updates {
                w.update(arms, *r);
            }
            for i in 0..6 {
                for j in 0..6 {
                    prop_assert_eq!(w.get(i, j), w.get(j, i));
                    prop_assert!((0.0..=1.0).contains(&w.get(i, j)));
                }
            }
        }
    }
}
