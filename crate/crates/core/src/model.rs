//! The tabular bandit engine.
//!
//! A run is driven by a [`CounterfactualTable`] of per-arm reward draws and a
//! [`SeedStream`]. The `n`-th pull of arm `k` reveals row `n` of column `k`;
//! the round seed `W_{t-1}` picks the arm at round `t` from the sampling
//! distribution. Arms are indexed from 0 in this API, table rows from 1.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::choosing::{self, ChoosingRule};
use crate::dist::{inverse_cdf_unchecked, ArmSpec};
use crate::error::{Error, Result};
use crate::rng::{keyed_uniform, slot, Domain, SeedStream};
use crate::sampling::{self, SamplingRule};
use crate::stopping::{self, StoppingRule};

/// Lazily evaluated `N x K` table of independent arm draws.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualTable {
    master_seed: u64,
    arms: Arc<[ArmSpec]>,
    overrides: BTreeMap<(u64, usize), f64>,
}

impl CounterfactualTable {
    pub fn new(master_seed: u64, arms: impl Into<Arc<[ArmSpec]>>) -> Result<Self> {
        let arms = arms.into();
        if arms.is_empty() {
            return Err(Error::domain("a table needs at least one arm"));
        }
        for arm in arms.iter() {
            arm.validate()?;
        }
        Ok(Self {
            master_seed,
            arms,
            overrides: BTreeMap::new(),
        })
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn arms(&self) -> &[ArmSpec] {
        &self.arms
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    /// Keyed uniform behind cell `(row, arm)`, before the inverse CDF.
    pub fn cell_uniform(&self, row: u64, arm: usize) -> f64 {
        keyed_uniform(self.master_seed, Domain::TableCell, &[row, arm as u64])
    }

    /// Value of cell `(row, arm)`; `row >= 1`.
    pub fn cell(&self, row: u64, arm: usize) -> Result<f64> {
        if arm >= self.arms.len() {
            return Err(Error::domain(format!(
                "arm {arm} out of range for {} arms",
                self.arms.len()
            )));
        }
        if row == 0 {
            return Err(Error::domain("table rows start at 1"));
        }
        Ok(self.cell_unchecked(row, arm))
    }

    #[inline]
    pub(crate) fn cell_unchecked(&self, row: u64, arm: usize) -> f64 {
        if !self.overrides.is_empty() {
            if let Some(&v) = self.overrides.get(&(row, arm)) {
                return v;
            }
        }
        inverse_cdf_unchecked(&self.arms[arm], self.cell_uniform(row, arm))
    }

    /// Copy of this table with cell `(row, arm)` replaced by `value`.
    pub fn with_override(&self, row: u64, arm: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.overrides.insert((row, arm), value);
        out
    }

    pub fn overrides(&self) -> impl Iterator<Item = ((u64, usize), f64)> + '_ {
        self.overrides.iter().map(|(&k, &v)| (k, v))
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopStatus {
    Running,
    Stopped(u64),
    /// The stopping rule did not fire within the step cap.
    CapExceeded(u64),
}

/// Full history of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    actions: Vec<usize>,
    rewards: Vec<f64>,
    sums: Vec<f64>,
    counts: Vec<u64>,
    last_reward: Vec<Option<f64>>,
    status: StopStatus,
    chosen: Option<usize>,
}

impl Trace {
    pub fn new(num_arms: usize) -> Self {
        Self {
            actions: Vec::new(),
            rewards: Vec::new(),
            sums: vec![0.0; num_arms],
            counts: vec![0; num_arms],
            last_reward: vec![None; num_arms],
            status: StopStatus::Running,
            chosen: None,
        }
    }

    /// Builds a running trace from an explicit history.
    pub fn from_history(num_arms: usize, history: &[(usize, f64)]) -> Result<Self> {
        let mut trace = Trace::new(num_arms);
        for &(arm, reward) in history {
            if arm >= num_arms {
                return Err(Error::domain(format!("arm {arm} out of range")));
            }
            trace.push(arm, reward);
        }
        Ok(trace)
    }

    #[inline]
    pub fn push(&mut self, arm: usize, reward: f64) {
        self.actions.push(arm);
        self.rewards.push(reward);
        self.sums[arm] += reward;
        self.counts[arm] += 1;
        self.last_reward[arm] = Some(reward);
    }

    pub fn num_arms(&self) -> usize {
        self.counts.len()
    }

    /// Current round `t` (number of pulls so far).
    #[inline]
    pub fn time(&self) -> u64 {
        self.actions.len() as u64
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    #[inline]
    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[inline]
    pub fn sum(&self, arm: usize) -> f64 {
        self.sums[arm]
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    /// `S_k / N_k`, `None` while the arm is unsampled.
    #[inline]
    pub fn sample_mean(&self, arm: usize) -> Option<f64> {
        match self.counts[arm] {
            0 => None,
            n => Some(self.sums[arm] / n as f64),
        }
    }

    pub fn last_reward(&self, arm: usize) -> Option<f64> {
        self.last_reward[arm]
    }

    pub fn last_action(&self) -> Option<(usize, f64)> {
        Some((*self.actions.last()?, *self.rewards.last()?))
    }

    /// `N_k(t)` for every arm at round `t <= time()`.
    pub fn counts_at(&self, t: u64) -> Vec<u64> {
        let mut counts = vec![0; self.num_arms()];
        for &a in self.actions.iter().take(t as usize) {
            counts[a] += 1;
        }
        counts
    }

    /// `(S_k(t), N_k(t))` at round `t <= time()`.
    pub fn sum_count_at(&self, arm: usize, t: u64) -> (f64, u64) {
        let mut s = 0.0;
        let mut n = 0;
        for (&a, &y) in self.actions.iter().zip(&self.rewards).take(t as usize) {
            if a == arm {
                s += y;
                n += 1;
            }
        }
        (s, n)
    }

    pub fn status(&self) -> StopStatus {
        self.status
    }

    pub fn stopping_time(&self) -> Option<u64> {
        match self.status {
            StopStatus::Stopped(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self.status, StopStatus::CapExceeded(_))
    }

    pub fn chosen(&self) -> Option<usize> {
        self.chosen
    }

    /// Re-reads every reward from `table` along this trace's actions.
    pub fn replays_against(&self, table: &CounterfactualTable) -> bool {
        let mut counts = vec![0u64; self.num_arms()];
        self.actions.iter().zip(&self.rewards).all(|(&a, &y)| {
            counts[a] += 1;
            table.cell_unchecked(counts[a], a).to_bits() == y.to_bits()
        })
    }
}

/// A data-collecting strategy: sampling, stopping and choosing rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub sampling: SamplingRule,
    pub stopping: StoppingRule,
    pub choosing: ChoosingRule,
}

impl StrategySpec {
    pub fn new(sampling: SamplingRule, stopping: StoppingRule, choosing: ChoosingRule) -> Self {
        Self {
            sampling,
            stopping,
            choosing,
        }
    }

    pub fn validate(&self, num_arms: usize) -> Result<()> {
        self.sampling.validate(num_arms)?;
        self.stopping.validate(num_arms)?;
        self.choosing.validate(num_arms)?;
        Ok(())
    }
}

/// Tolerance on the total mass of a sampling distribution.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// Arm whose cumulative-probability interval contains `w`.
pub(crate) fn select_arm(probs: &[f64], w: f64) -> Result<usize> {
    let mut total = 0.0;
    for &p in probs {
        if !(p >= 0.0) {
            return Err(Error::InternalConsistency(format!(
                "negative or NaN sampling probability {p}"
            )));
        }
        total += p;
    }
    if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(Error::InternalConsistency(format!(
            "sampling probabilities sum to {total}"
        )));
    }
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = k;
            cum += p;
            if w < cum {
                return Ok(k);
            }
        }
    }
    Ok(last_positive)
}

/// Runs `strategy` against `table` for at most `cap` rounds.
pub fn run_strategy(
    strategy: &StrategySpec,
    table: &CounterfactualTable,
    seeds: &SeedStream,
    cap: u64,
) -> Result<Trace> {
    if cap == 0 {
        return Err(Error::domain("cap must be at least 1"));
    }
    let k = table.num_arms();
    strategy.validate(k)?;

    let mut trace = Trace::new(k);
    let mut probs = vec![0.0; k];
    for t in 1..=cap {
        sampling::fill_probabilities(&strategy.sampling, &trace, seeds, &mut probs)?;
        let arm = select_arm(&probs, seeds.uniform(t - 1, slot::SELECT))?;
        let reward = table.cell_unchecked(trace.count(arm) + 1, arm);
        trace.push(arm, reward);
        if stopping::should_stop(&strategy.stopping, &trace) {
            trace.status = StopStatus::Stopped(t);
            trace.chosen = Some(choosing::choose(&strategy.choosing, &trace, seeds)?);
            return Ok(trace);
        }
    }
    trace.status = StopStatus::CapExceeded(cap);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choosing::ChoosingRule;
    use crate::sampling::SamplingRule;
    use crate::stopping::StoppingRule;

    fn gauss3() -> Vec<ArmSpec> {
        vec![
            ArmSpec::gaussian(1.0, 1.0),
            ArmSpec::gaussian(2.0, 1.0),
            ArmSpec::gaussian(3.0, 1.0),
        ]
    }

    #[test]
    fn override_dominates_and_is_local() {
        let t = CounterfactualTable::new(5, gauss3()).unwrap();
        let o = t.with_override(3, 0, 7.5);
        assert_eq!(o.cell(3, 0).unwrap(), 7.5);
        assert_eq!(o.cell(3, 1).unwrap(), t.cell(3, 1).unwrap());
        assert_eq!(o.cell(2, 0).unwrap(), t.cell(2, 0).unwrap());
        // input untouched
        assert_ne!(t.cell(3, 0).unwrap(), 7.5);
        let oo = o.with_override(3, 0, -1.0);
        assert_eq!(oo.cell(3, 0).unwrap(), -1.0);
    }

    #[test]
    fn cells_are_pure() {
        let a = CounterfactualTable::new(77, gauss3()).unwrap();
        let b = CounterfactualTable::new(77, gauss3()).unwrap();
        for i in 1..50 {
            for k in 0..3 {
                assert_eq!(a.cell(i, k).unwrap().to_bits(), b.cell(i, k).unwrap().to_bits());
            }
        }
        assert!(matches!(a.cell(1, 3), Err(Error::Domain(_))));
        assert!(matches!(a.cell(0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn bernoulli_column_mean() {
        let t = CounterfactualTable::new(2024, vec![ArmSpec::bernoulli(0.5)]).unwrap();
        let n = 100_000;
        let mean = (1..=n).map(|i| t.cell(i, 0).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
    }

    #[test]
    fn round_robin_fixed_horizon_balances_counts() {
        let s = StrategySpec::new(
            SamplingRule::RoundRobin,
            StoppingRule::FixedHorizon { horizon: 6 },
            ChoosingRule::FixedArm { arm: 0 },
        );
        let t = CounterfactualTable::new(1, gauss3()).unwrap();
        let tr = run_strategy(&s, &t, &SeedStream::new(1), 100).unwrap();
        assert_eq!(tr.stopping_time(), Some(6));
        assert_eq!(tr.counts(), &[2, 2, 2]);
        assert_eq!(tr.chosen(), Some(0));
    }

    #[test]
    fn first_success_hand_trace() {
        // arm 1 column (0, 0, 1, ...): pulled at t = 1, 3, 5.
        let arms = vec![ArmSpec::bernoulli(0.5), ArmSpec::bernoulli(0.5)];
        let t = CounterfactualTable::new(3, arms)
            .unwrap()
            .with_override(1, 0, 0.0)
            .with_override(2, 0, 0.0)
            .with_override(3, 0, 1.0);
        let s = StrategySpec::new(
            SamplingRule::RoundRobin,
            StoppingRule::FirstSuccess { arm: 0, target: 1.0 },
            ChoosingRule::FixedArm { arm: 0 },
        );
        let tr = run_strategy(&s, &t, &SeedStream::new(3), 100).unwrap();
        assert_eq!(tr.stopping_time(), Some(5));
        assert_eq!(tr.count(0), 3);
        assert_eq!(tr.count(1), 2);
    }

    #[test]
    fn runs_are_deterministic_and_replayable() {
        let s = StrategySpec::new(
            SamplingRule::thompson_gaussian_default(),
            StoppingRule::FixedHorizon { horizon: 200 },
            ChoosingRule::ArgmaxMean,
        );
        let t = CounterfactualTable::new(11, gauss3()).unwrap();
        let a = run_strategy(&s, &t, &SeedStream::new(12), 1000).unwrap();
        let b = run_strategy(&s, &t, &SeedStream::new(12), 1000).unwrap();
        assert_eq!(a, b);
        assert!(a.replays_against(&t));
        assert_eq!(a.counts().iter().sum::<u64>(), a.time());
        for k in 0..3 {
            let (s_k, n_k) = a.sum_count_at(k, a.time());
            assert_eq!(n_k, a.count(k));
            assert_eq!(s_k.to_bits(), a.sum(k).to_bits());
        }
    }

    #[test]
    fn cap_exceeded_is_flagged() {
        let s = StrategySpec::new(
            SamplingRule::RoundRobin,
            StoppingRule::FixedHorizon { horizon: 50 },
            ChoosingRule::ArgmaxMean,
        );
        let t = CounterfactualTable::new(1, gauss3()).unwrap();
        let tr = run_strategy(&s, &t, &SeedStream::new(1), 10).unwrap();
        assert!(tr.is_censored());
        assert_eq!(tr.chosen(), None);
        assert_eq!(tr.time(), 10);
        assert!(run_strategy(&s, &t, &SeedStream::new(1), 0).is_err());
    }

    #[test]
    fn select_arm_partitions_unit_interval() {
        let p = [0.2, 0.5, 0.3];
        assert_eq!(select_arm(&p, 0.1).unwrap(), 0);
        assert_eq!(select_arm(&p, 0.3).unwrap(), 1);
        assert_eq!(select_arm(&p, 0.95).unwrap(), 2);
        assert_eq!(select_arm(&[0.0, 1.0, 0.0], 0.999).unwrap(), 1);
        assert!(matches!(
            select_arm(&[0.5, 0.6], 0.1),
            Err(Error::InternalConsistency(_))
        ));
    }

    #[test]
    fn uniform_random_sampling_balances_in_expectation() {
        let arms = gauss3();
        let s = StrategySpec::new(
            SamplingRule::UniformRandom,
            StoppingRule::FixedHorizon { horizon: 30 },
            ChoosingRule::FixedArm { arm: 0 },
        );
        let reps = 20_000;
        let mut counts = vec![Vec::new(); 3];
        for r in 0..reps as u64 {
            let seed = crate::rng::rep_seed(9, r);
            let t = CounterfactualTable::new(seed, arms.clone()).unwrap();
            let tr = run_strategy(&s, &t, &SeedStream::new(seed), 100).unwrap();
            for (k, c) in counts.iter_mut().enumerate() {
                c.push(tr.count(k) as f64);
            }
        }
        for c in &counts {
            let m = c.iter().sum::<f64>() / reps as f64;
            let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
            let se = (v / reps as f64).sqrt();
            assert!((m - 10.0).abs() < 4.0 * se, "mean {m} se {se}");
        }
    }
}
