//! Counterfactual lab: perturb one table cell, replay, and check whether
//! counts, stopping time and choice move in the declared direction.
//!
//! Verdicts are empirical. A clause "passes" on a sweep when the replayed
//! quantity is weakly monotone in the declared direction across the grid.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::choosing::ChoosingRule;
use crate::dist::{inverse_cdf, ArmSpec};
use crate::error::{Error, Result};
use crate::model::{run_strategy, CounterfactualTable, StrategySpec, Trace};
use crate::rng::{keyed_u64, keyed_uniform, Domain, SeedStream};
use crate::sampling::SamplingRule;
use crate::stopping::{Boundary, StoppingRule};

/// Quantiles used to spread perturbation grids over an arm's distribution.
pub const GRID_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// A single-cell perturbation experiment: row `row` (1-based) of arm `arm`
/// takes each value of `grid` in turn; every other cell and every auxiliary
/// uniform stays fixed.
#[derive(Debug, Clone)]
pub struct PerturbationSweep {
    pub strategy: StrategySpec,
    pub arms: Arc<[ArmSpec]>,
    pub seed: u64,
    pub row: u64,
    pub arm: usize,
    pub grid: Vec<f64>,
    pub cap: u64,
}

impl PerturbationSweep {
    pub fn new(
        strategy: StrategySpec,
        arms: impl Into<Arc<[ArmSpec]>>,
        seed: u64,
        (row, arm): (u64, usize),
        grid: Vec<f64>,
        cap: u64,
    ) -> Result<Self> {
        let sweep = PerturbationSweep {
            strategy,
            arms: arms.into(),
            seed,
            row,
            arm,
            grid,
            cap,
        };
        sweep.validate()?;
        Ok(sweep)
    }

    fn validate(&self) -> Result<()> {
        self.strategy.validate(self.arms.len())?;
        if self.grid.len() < 3 {
            return Err(Error::domain("perturbation grid needs at least 3 values"));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("perturbation grid must be strictly increasing"));
        }
        check_cell(&self.arms, self.row, self.arm, &self.grid)
    }

    pub fn replay(&self) -> Result<Vec<Replay>> {
        replay_with_perturbation(
            &self.strategy,
            self.arms.clone(),
            self.seed,
            (self.row, self.arm),
            &self.grid,
            self.cap,
        )
    }
}

fn check_cell(arms: &[ArmSpec], row: u64, arm: usize, grid: &[f64]) -> Result<()> {
    let spec = arms
        .get(arm)
        .ok_or_else(|| Error::domain(format!("arm {arm} out of range")))?;
    if row == 0 {
        return Err(Error::domain("table rows start at 1"));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("grid values must be finite"));
    }
    if let Some((lo, hi)) = spec.support_hull() {
        if let Some(v) = grid.iter().find(|&&v| v < lo || v > hi) {
            return Err(Error::domain(format!("grid value {v} outside [{lo}, {hi}]")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub value: f64,
    pub trace: Trace,
}

/// One trace per grid value, each run against the base table with cell
/// `(row, arm)` overridden and the same seed stream. The grid may be in any
/// order and may repeat values.
pub fn replay_with_perturbation(
    strategy: &StrategySpec,
    arms: impl Into<Arc<[ArmSpec]>>,
    seed: u64,
    (row, arm): (u64, usize),
    grid: &[f64],
    cap: u64,
) -> Result<Vec<Replay>> {
    let base = CounterfactualTable::new(seed, arms)?;
    check_cell(base.arms(), row, arm, grid)?;
    let seeds = SeedStream::new(seed);
    grid.iter()
        .map(|&value| {
            let table = base.with_override(row, arm, value);
            Ok(Replay {
                value,
                trace: run_strategy(strategy, &table, &seeds, cap)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Clause {
    /// `N_k(t)` at one round, or at every round up to the shortest replay.
    SamplingNk { t: Option<u64> },
    StoppingT,
    ChoosingIndicator,
    /// `1(kappa = k) / N_k(T)`.
    StrategyRatio,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clause::SamplingNk { t: Some(t) } => write!(f, "sampling-nk@{t}"),
            Clause::SamplingNk { t: None } => f.write_str("sampling-nk"),
            Clause::StoppingT => f.write_str("stopping-t"),
            Clause::ChoosingIndicator => f.write_str("choosing-indicator"),
            Clause::StrategyRatio => f.write_str("strategy-ratio"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    NonDecreasing,
    NonIncreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Found {
    NonDecreasing,
    NonIncreasing,
    Constant,
    Violated,
}

impl Found {
    pub fn satisfies(self, expected: Direction) -> bool {
        matches!(
            (self, expected),
            (Found::Constant, _)
                | (Found::NonDecreasing, Direction::NonDecreasing)
                | (Found::NonIncreasing, Direction::NonIncreasing)
        )
    }
}

/// Adjacent grid values whose replayed quantities break the expected order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub lower_value: f64,
    pub upper_value: f64,
    pub lower_quantity: f64,
    pub upper_quantity: f64,
    /// Round at which the quantities were compared, for `SamplingNk`.
    pub round: Option<u64>,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "x={} -> {} but x={} -> {}",
            self.lower_value, self.lower_quantity, self.upper_value, self.upper_quantity
        )?;
        if let Some(t) = self.round {
            write!(f, " at t={t}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityVerdict {
    pub clause: Clause,
    pub expected: Direction,
    /// `None` when the verdict is inconclusive.
    pub found: Option<Found>,
    pub witness: Option<Witness>,
    pub inconclusive: bool,
}

impl MonotonicityVerdict {
    pub fn passed(&self) -> bool {
        self.found.is_some_and(|f| f.satisfies(self.expected))
    }

    pub fn failed(&self) -> bool {
        !self.inconclusive && !self.passed()
    }
}

/// Per-replay quantity series. `SamplingNk` yields one entry per round.
fn quantities(clause: Clause, arm: usize, replays: &[Replay]) -> Result<Vec<(Option<u64>, Vec<f64>)>> {
    match clause {
        Clause::SamplingNk { t } => {
            let shortest = replays.iter().map(|r| r.trace.time()).min().unwrap_or(0);
            let rounds: Vec<u64> = match t {
                Some(t) if t > shortest => {
                    return Err(Error::domain(format!("round {t} beyond shortest replay {shortest}")))
                }
                Some(t) => vec![t],
                None => (1..=shortest).collect(),
            };
            // prefix counts of `arm` in each replay
            let prefix: Vec<Vec<u64>> = replays
                .iter()
                .map(|r| {
                    let mut n = 0;
                    std::iter::once(0)
                        .chain(r.trace.actions().iter().map(|&a| {
                            n += u64::from(a == arm);
                            n
                        }))
                        .collect()
                })
                .collect();
            Ok(rounds
                .into_iter()
                .map(|t| (Some(t), prefix.iter().map(|p| p[t as usize] as f64).collect()))
                .collect())
        }
        Clause::StoppingT => Ok(vec![(
            None,
            replays
                .iter()
                .map(|r| r.trace.stopping_time().expect("uncensored") as f64)
                .collect(),
        )]),
        Clause::ChoosingIndicator => Ok(vec![(
            None,
            replays
                .iter()
                .map(|r| f64::from(u8::from(r.trace.chosen() == Some(arm))))
                .collect(),
        )]),
        Clause::StrategyRatio => {
            let v = replays
                .iter()
                .map(|r| {
                    if r.trace.chosen() != Some(arm) {
                        Ok(0.0)
                    } else if r.trace.count(arm) == 0 {
                        Err(Error::UndefinedMean { arm })
                    } else {
                        Ok(1.0 / r.trace.count(arm) as f64)
                    }
                })
                .collect::<Result<_>>()?;
            Ok(vec![(None, v)])
        }
    }
}

fn classify(series: &[f64]) -> Found {
    let up = series.windows(2).all(|w| w[0] <= w[1]);
    let down = series.windows(2).all(|w| w[0] >= w[1]);
    match (up, down) {
        (true, true) => Found::Constant,
        (true, false) => Found::NonDecreasing,
        (false, true) => Found::NonIncreasing,
        (false, false) => Found::Violated,
    }
}

/// Checks `clause` for the perturbed arm across replays sorted by value.
pub fn verdict_on(
    clause: Clause,
    expected: Direction,
    arm: usize,
    replays: &[Replay],
) -> Result<MonotonicityVerdict> {
    let needs_stop = !matches!(clause, Clause::SamplingNk { .. });
    if replays.is_empty() || (needs_stop && replays.iter().any(|r| r.trace.is_censored())) {
        return Ok(MonotonicityVerdict {
            clause,
            expected,
            found: None,
            witness: None,
            inconclusive: true,
        });
    }
    let mut sorted: Vec<&Replay> = replays.iter().collect();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value));
    let owned: Vec<Replay> = sorted.into_iter().cloned().collect();

    let mut any_up = false;
    let mut any_down = false;
    let mut witness = None;
    for (round, series) in quantities(clause, arm, &owned)? {
        let found = classify(&series);
        any_up |= matches!(found, Found::NonDecreasing | Found::Violated);
        any_down |= matches!(found, Found::NonIncreasing | Found::Violated);
        if witness.is_none() {
            witness = owned.windows(2).zip(series.windows(2)).find_map(|(r, q)| {
                let broken = match expected {
                    Direction::NonDecreasing => q[1] < q[0],
                    Direction::NonIncreasing => q[1] > q[0],
                };
                broken.then(|| Witness {
                    lower_value: r[0].value,
                    upper_value: r[1].value,
                    lower_quantity: q[0],
                    upper_quantity: q[1],
                    round,
                })
            });
        }
    }
    let found = match (any_up, any_down) {
        (false, false) => Found::Constant,
        (true, false) => Found::NonDecreasing,
        (false, true) => Found::NonIncreasing,
        (true, true) => Found::Violated,
    };
    Ok(MonotonicityVerdict {
        clause,
        expected,
        found: Some(found),
        witness,
        inconclusive: false,
    })
}

pub fn monotonicity_verdict(
    sweep: &PerturbationSweep,
    clause: Clause,
    expected: Direction,
) -> Result<MonotonicityVerdict> {
    verdict_on(clause, expected, sweep.arm, &sweep.replay()?)
}

/// Outcome of the three lil'UCB proof-step checks over every ordered pair of
/// replays `(x, x')` with `x <= x'`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaProbe {
    /// `kappa = k  =>  T' <= T`.
    pub stop_no_later: bool,
    /// `kappa = k  =>  kappa' = k`.
    pub choice_preserved: bool,
    /// `kappa' = k  =>  N_k(T) >= N'_k(T')`.
    pub count_no_larger: bool,
    pub inconclusive: bool,
    /// First failing pair, as `(x, x')`.
    pub witness: Option<(f64, f64)>,
}

impl LemmaProbe {
    pub fn passed(&self) -> bool {
        !self.inconclusive && self.stop_no_later && self.choice_preserved && self.count_no_larger
    }
}

/// Pairs are oriented by value, so a reversed or repeated grid is fine.
/// The stopping-time step is conditioned on `kappa = k`, as in the argument
/// it mirrors; unconditionally it does not hold.
pub fn lemma_probe_on(arm: usize, replays: &[Replay]) -> LemmaProbe {
    let mut probe = LemmaProbe {
        stop_no_later: true,
        choice_preserved: true,
        count_no_larger: true,
        inconclusive: replays.iter().any(|r| r.trace.is_censored()),
        witness: None,
    };
    if probe.inconclusive {
        return probe;
    }
    for a in replays {
        for b in replays.iter().filter(|b| a.value <= b.value) {
            let chosen = a.trace.chosen() == Some(arm);
            let chosen_after = b.trace.chosen() == Some(arm);
            let stop = !chosen || b.trace.stopping_time() <= a.trace.stopping_time();
            let choice = !chosen || chosen_after;
            let count = !chosen_after || a.trace.count(arm) >= b.trace.count(arm);
            probe.stop_no_later &= stop;
            probe.choice_preserved &= choice;
            probe.count_no_larger &= count;
            if !(stop && choice && count) && probe.witness.is_none() {
                probe.witness = Some((a.value, b.value));
            }
        }
    }
    probe
}

pub fn lil_ucb_lemma_probe(sweep: &PerturbationSweep) -> Result<LemmaProbe> {
    Ok(lemma_probe_on(sweep.arm, &sweep.replay()?))
}

/// Quantile-spread grid for perturbing a cell whose base value is `base`.
///
/// Discrete families collapse the quantiles to a few support points; when
/// fewer than three distinct values remain, the endpoints and midpoint of
/// the support hull are added.
pub fn quantile_grid(arm: &ArmSpec, base: f64) -> Result<Vec<f64>> {
    let mut grid = GRID_QUANTILES
        .iter()
        .map(|&q| inverse_cdf(arm, q))
        .collect::<Result<Vec<f64>>>()?;
    grid.push(base);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.len() < 3 {
        if let Some((lo, hi)) = arm.support_hull() {
            grid.extend([lo, 0.5 * (lo + hi), hi]);
            grid.sort_by(f64::total_cmp);
            grid.dedup();
        }
    }
    Ok(grid)
}

/// Draws a sweep: a fresh table seed, then a uniformly random cell among
/// those the base run actually read, then the quantile grid for that cell.
pub fn random_sweep(
    strategy: &StrategySpec,
    arms: impl Into<Arc<[ArmSpec]>>,
    cap: u64,
    sweep_seed: u64,
) -> Result<PerturbationSweep> {
    let arms = arms.into();
    let seed = keyed_u64(sweep_seed, Domain::Sweep, &[0]);
    let table = CounterfactualTable::new(seed, arms.clone())?;
    let base = run_strategy(strategy, &table, &SeedStream::new(seed), cap)?;
    let actions = base.actions();
    let pick = (keyed_uniform(sweep_seed, Domain::Sweep, &[1]) * actions.len() as f64) as usize;
    let pick = pick.min(actions.len() - 1);
    let arm = actions[pick];
    let row = actions[..=pick].iter().filter(|&&a| a == arm).count() as u64;
    let base_value = table.cell(row, arm)?;
    let grid = quantile_grid(&arms[arm], base_value)?;
    PerturbationSweep::new(strategy.clone(), arms, seed, (row, arm), grid, cap)
}

/// Whether a rule set is expected to pass its clauses or be rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeclaredClass {
    Optimistic,
    Rejected,
}

/// A strategy plus the clauses it is claimed to satisfy.
#[derive(Debug, Clone)]
pub struct RuleSet {
    pub name: &'static str,
    pub strategy: StrategySpec,
    pub arms: Vec<ArmSpec>,
    pub cap: u64,
    pub clauses: Vec<(Clause, Direction)>,
    pub lemma_probe: bool,
    pub declared: DeclaredClass,
}

fn gaussians(means: &[f64]) -> Vec<ArmSpec> {
    means.iter().map(|&m| ArmSpec::gaussian(m, 1.0)).collect()
}

pub fn rule_sets() -> Vec<RuleSet> {
    use Direction::*;
    let fixed = |t| StoppingRule::FixedHorizon { horizon: t };
    let three = gaussians(&[0.0, 0.5, 1.0]);
    let two = gaussians(&[0.0, 0.5]);
    let report_first = ChoosingRule::FixedArm { arm: 0 };
    let sampling = |name, rule, arms| RuleSet {
        name,
        strategy: StrategySpec::new(rule, fixed(40), report_first.clone()),
        arms,
        cap: 40,
        clauses: vec![(Clause::SamplingNk { t: None }, NonDecreasing)],
        lemma_probe: false,
        declared: DeclaredClass::Optimistic,
    };
    let stopping = |name, rule, arms| RuleSet {
        name,
        strategy: StrategySpec::new(SamplingRule::RoundRobin, rule, report_first.clone()),
        arms,
        cap: 1_000_000,
        clauses: vec![(Clause::StoppingT, NonIncreasing)],
        lemma_probe: false,
        declared: DeclaredClass::Optimistic,
    };
    let choosing = |name, rule| RuleSet {
        name,
        strategy: StrategySpec::new(SamplingRule::RoundRobin, fixed(12), rule),
        arms: gaussians(&[0.0, 0.5, 1.0]),
        cap: 12,
        clauses: vec![(Clause::ChoosingIndicator, NonDecreasing)],
        lemma_probe: false,
        declared: DeclaredClass::Optimistic,
    };
    vec![
        sampling("greedy", SamplingRule::Greedy { warmup: true }, three.clone()),
        sampling("ucb", SamplingRule::Ucb { delta: 0.1, warmup: true }, three.clone()),
        // Randomized rules get two arms: with three or more, a raised reward
        // can shift which arm a later round's shared uniform lands on.
        sampling(
            "eps-greedy",
            SamplingRule::EpsGreedy {
                epsilon: 0.1,
                warmup: true,
            },
            two.clone(),
        ),
        sampling(
            "thompson-gaussian",
            SamplingRule::thompson_gaussian_default(),
            two,
        ),
        stopping(
            "mean-boundary",
            StoppingRule::MeanBoundary {
                arm: 0,
                boundary: Boundary::Constant { value: 0.3 },
            },
            gaussians(&[0.5, 0.0]),
        ),
        stopping(
            "line-crossing",
            StoppingRule::LineCrossing {
                arm: 0,
                slope: 0.5,
                intercept: 3.0,
            },
            gaussians(&[1.0, 0.0]),
        ),
        stopping(
            "first-success",
            StoppingRule::FirstSuccess { arm: 0, target: 1.0 },
            vec![ArmSpec::bernoulli(0.3), ArmSpec::bernoulli(0.5)],
        ),
        choosing("argmax-mean", ChoosingRule::ArgmaxMean),
        choosing(
            "rank-probability",
            ChoosingRule::RankProbability {
                weights: vec![0.5, 0.3, 0.2],
            },
        ),
        choosing("argmax-last-observation", ChoosingRule::ArgmaxLastObservation),
        RuleSet {
            name: "lil-ucb",
            strategy: StrategySpec::new(
                SamplingRule::lil_ucb_default(),
                StoppingRule::lil_ucb_for_beta(1.0),
                ChoosingRule::ArgmaxCount,
            ),
            arms: gaussians(&[1.0, 0.0, -1.0]),
            cap: 1_000_000,
            clauses: vec![(Clause::StrategyRatio, NonDecreasing)],
            lemma_probe: true,
            declared: DeclaredClass::Optimistic,
        },
        RuleSet {
            declared: DeclaredClass::Rejected,
            ..sampling(
                "pessimistic-fixture",
                SamplingRule::ArgminMean { warmup: true },
                three,
            )
        },
    ]
}

pub fn rule_set(name: &str) -> Option<RuleSet> {
    rule_sets().into_iter().find(|r| r.name == name)
}

/// One line of the certification table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictRow {
    pub rule_set: String,
    pub sweep: u64,
    pub seed: u64,
    /// 1-based table row and arm of the perturbed cell.
    pub row: u64,
    pub arm: usize,
    pub grid: String,
    pub clause: String,
    pub expected: String,
    pub found: String,
    pub passed: bool,
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyReport {
    pub rule_set: String,
    pub declared: DeclaredClass,
    pub rows: Vec<VerdictRow>,
}

impl CertifyReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.passed && r.found != "inconclusive").count()
    }

    pub fn inconclusive(&self) -> usize {
        self.rows.iter().filter(|r| r.found == "inconclusive").count()
    }

    /// Certified means every conclusive check passed and none was inconclusive.
    pub fn certified(&self) -> bool {
        self.failures() == 0 && self.inconclusive() == 0
    }

    /// Whether the outcome agrees with the rule set's declared class.
    pub fn matches_declaration(&self) -> bool {
        match self.declared {
            DeclaredClass::Optimistic => self.certified(),
            DeclaredClass::Rejected => self.failures() > 0,
        }
    }

    pub fn first_witness(&self) -> Option<&VerdictRow> {
        self.rows.iter().find(|r| !r.passed && !r.witness.is_empty())
    }
}

fn kebab<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn sweep_rows(set: &RuleSet, index: u64, master_seed: u64) -> Result<Vec<VerdictRow>> {
    let sweep_seed = keyed_u64(master_seed, Domain::Sweep, &[index]);
    let sweep = random_sweep(&set.strategy, set.arms.clone(), set.cap, sweep_seed)?;
    let replays = sweep.replay()?;
    let grid = sweep
        .grid
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect::<Vec<_>>()
        .join(" ");
    let row = |clause: String, expected: String, found: String, passed: bool, witness: String| VerdictRow {
        rule_set: set.name.to_owned(),
        sweep: index,
        seed: sweep.seed,
        row: sweep.row,
        arm: sweep.arm + 1,
        grid: grid.clone(),
        clause,
        expected,
        found,
        passed,
        witness,
    };
    let mut rows = Vec::new();
    for &(clause, expected) in &set.clauses {
        let v = verdict_on(clause, expected, sweep.arm, &replays)?;
        rows.push(row(
            clause.to_string(),
            kebab(&expected),
            v.found.map_or_else(|| "inconclusive".to_owned(), |f| kebab(&f)),
            v.passed(),
            v.witness.map(|w| w.to_string()).unwrap_or_default(),
        ));
    }
    if set.lemma_probe {
        let p = lemma_probe_on(sweep.arm, &replays);
        let found = if p.inconclusive {
            "inconclusive".to_owned()
        } else {
            format!(
                "stop={} choice={} count={}",
                p.stop_no_later, p.choice_preserved, p.count_no_larger
            )
        };
        rows.push(row(
            "lemma-probes".to_owned(),
            "all-hold".to_owned(),
            found,
            p.passed(),
            p.witness
                .map(|(a, b)| format!("x={a} vs x'={b}"))
                .unwrap_or_default(),
        ));
    }
    Ok(rows)
}

/// Runs `sweeps` randomized sweeps of `set`. Sweeps run in parallel and are
/// reported in index order.
pub fn certify(set: &RuleSet, sweeps: u64, master_seed: u64) -> Result<CertifyReport> {
    if sweeps == 0 {
        return Err(Error::domain("need at least one sweep"));
    }
    let per_sweep: Vec<Vec<VerdictRow>> = (0..sweeps)
        .into_par_iter()
        .map(|i| sweep_rows(set, i, master_seed))
        .collect::<Result<_>>()?;
    Ok(CertifyReport {
        rule_set: set.name.to_owned(),
        declared: set.declared,
        rows: per_sweep.into_iter().flatten().collect(),
    })
}
