//! Monte-Carlo bias estimation and the identities it is checked against.
//!
//! All estimators consume [`RepRecord`]s: the per-replication outcome of a
//! run reduced to `(N_k, mu_hat_k, mu_k)` per arm plus stopping time and
//! chosen arm. The harness rebuilds the same records from raw CSV rows, so a
//! summary computed at run time and one recomputed from disk agree bit for
//! bit.

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::ArmSpec;
use crate::error::{Error, Result};
use crate::model::{run_strategy, CounterfactualTable, StrategySpec, Trace};
use crate::rng::{rep_seed, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmRecord {
    pub count: u64,
    pub mean_hat: Option<f64>,
    pub mu: f64,
}

impl ArmRecord {
    /// `mu_hat - mu` when the arm was sampled.
    pub fn diff(&self) -> Option<f64> {
        self.mean_hat.map(|m| m - self.mu)
    }

    /// `S_k - mu_k N_k`, zero for an unsampled arm.
    pub fn wald_term(&self) -> f64 {
        match self.diff() {
            Some(d) => d * self.count as f64,
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub rep: u64,
    /// `None` when the step cap was hit first.
    pub stop_time: Option<u64>,
    pub chosen: Option<usize>,
    pub arms: Vec<ArmRecord>,
}

impl RepRecord {
    pub fn from_trace(rep: u64, trace: &Trace, arms: &[ArmSpec]) -> Self {
        RepRecord {
            rep,
            stop_time: trace.stopping_time(),
            chosen: trace.chosen(),
            arms: arms
                .iter()
                .enumerate()
                .map(|(k, spec)| ArmRecord {
                    count: trace.count(k),
                    mean_hat: trace.sample_mean(k),
                    mu: spec.mean(),
                })
                .collect(),
        }
    }

    pub fn is_censored(&self) -> bool {
        self.stop_time.is_none()
    }
}

/// Mean with its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    /// Sample sd / sqrt(n); absent for fewer than two values.
    pub std_err: Option<f64>,
    pub n: u64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_err = (n >= 2).then(|| {
            let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Some(MeanSe {
            mean,
            std_err,
            n: n as u64,
        })
    }

    /// `|mean| > z * std_err`.
    pub fn exceeds(&self, z: f64) -> bool {
        self.std_err.is_some_and(|se| self.mean.abs() > z * se)
    }

    /// `|mean - target| <= z * std_err`.
    pub fn within(&self, target: f64, z: f64) -> bool {
        self.std_err.is_some_and(|se| (self.mean - target).abs() <= z * se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmBias {
    #[serde(serialize_with = "crate::one_based::serialize")]
    pub arm: usize,
    pub mu: f64,
    /// Mean of `mu_hat_k(T) - mu_k` over uncensored reps with `N_k >= 1`.
    pub bias: Option<MeanSe>,
    /// Mean of `N_k(T)` over uncensored reps.
    pub mean_count: f64,
    pub censored_reps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalBias {
    #[serde(serialize_with = "crate::one_based::serialize")]
    pub arm: usize,
    /// Empirical `P(kappa = k)` among reps with a defined chosen mean.
    pub share: f64,
    pub bias: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChosenBias {
    /// Mean of `mu_hat_kappa(T) - mu_kappa`.
    pub bias: MeanSe,
    pub conditional: Vec<ConditionalBias>,
    /// `sum_k share_k * conditional_k`, which equals `bias.mean` up to rounding.
    pub recomposed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaldResidual {
    #[serde(serialize_with = "crate::one_based::serialize")]
    pub arm: usize,
    /// Mean of `S_k(T) - mu_k N_k(T)`.
    pub residual: MeanSe,
    /// Total pulls of the arm across uncensored reps.
    pub observations: u64,
}

/// Both sides of `E[mu_hat - mu] = -Cov(mu_hat, N) / E[N]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceCheck {
    #[serde(serialize_with = "crate::one_based::serialize")]
    pub arm: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub discrepancy: f64,
    /// Standard error of the per-rep paired difference between the two sides.
    pub std_err: f64,
    pub reps: u64,
}

impl CovarianceCheck {
    pub fn consistent(&self, z: f64) -> bool {
        self.discrepancy.abs() <= z * self.std_err
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub reps: u64,
    pub censored_reps: u64,
    pub arms: Vec<ArmBias>,
    pub chosen: Option<ChosenBias>,
    pub covariance: Vec<CovarianceCheck>,
}

/// `S_k(t) / N_k(t)` at round `t` of a trace.
pub fn sample_mean(trace: &Trace, arm: usize, t: u64) -> Result<f64> {
    if arm >= trace.num_arms() {
        return Err(Error::domain(format!("arm {arm} out of range")));
    }
    if t > trace.time() {
        return Err(Error::domain(format!("round {t} is past the end of the trace")));
    }
    match trace.sum_count_at(arm, t) {
        (_, 0) => Err(Error::UndefinedMean { arm }),
        (s, n) => Ok(s / n as f64),
    }
}

/// Runs `reps` independent replications. Rep `r` uses the derived seed
/// `rep_seed(master_seed, r)` for both its table and its seed stream; the
/// result is in rep order regardless of how many threads ran it.
pub fn simulate(
    strategy: &StrategySpec,
    arms: &[ArmSpec],
    reps: u64,
    master_seed: u64,
    cap: u64,
) -> Result<Vec<RepRecord>> {
    strategy.validate(arms.len())?;
    let arms_shared: std::sync::Arc<[ArmSpec]> = arms.into();
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = rep_seed(master_seed, r);
            let table = CounterfactualTable::new(seed, arms_shared.clone())?;
            let trace = run_strategy(strategy, &table, &SeedStream::new(seed), cap)?;
            Ok(RepRecord::from_trace(r, &trace, arms))
        })
        .collect()
}

/// Simulates and summarizes in one step.
pub fn mc_bias(
    strategy: &StrategySpec,
    arms: &[ArmSpec],
    reps: u64,
    master_seed: u64,
    cap: u64,
) -> Result<BiasReport> {
    if reps < 2 {
        return Err(Error::domain("mc_bias needs at least 2 reps"));
    }
    bias_report(&simulate(strategy, arms, reps, master_seed, cap)?)
}

fn uncensored(records: &[RepRecord]) -> impl Iterator<Item = &RepRecord> {
    records.iter().filter(|r| !r.is_censored())
}

pub fn bias_report(records: &[RepRecord]) -> Result<BiasReport> {
    let reps = records.len() as u64;
    let censored_reps = records.iter().filter(|r| r.is_censored()).count() as u64;
    if reps == censored_reps {
        return Err(Error::NoData(format!("all {reps} reps were censored")));
    }
    let num_arms = records[0].arms.len();
    if records.iter().any(|r| r.arms.len() != num_arms) {
        return Err(Error::domain("records disagree on the number of arms"));
    }

    let mut arms = Vec::with_capacity(num_arms);
    let mut covariance = Vec::new();
    for k in 0..num_arms {
        let diffs: Vec<f64> = uncensored(records).filter_map(|r| r.arms[k].diff()).collect();
        let counts: Vec<f64> = uncensored(records).map(|r| r.arms[k].count as f64).collect();
        arms.push(ArmBias {
            arm: k,
            mu: records[0].arms[k].mu,
            bias: MeanSe::of(&diffs),
            mean_count: counts.iter().sum::<f64>() / counts.len() as f64,
            censored_reps,
        });
        if diffs.len() >= 2 {
            covariance.push(covariance_bias_check(records, k)?);
        }
    }

    let chosen = chosen_bias(records, num_arms);
    Ok(BiasReport {
        reps,
        censored_reps,
        arms,
        chosen,
        covariance,
    })
}

fn chosen_bias(records: &[RepRecord], num_arms: usize) -> Option<ChosenBias> {
    let pairs: Vec<(usize, f64)> = uncensored(records)
        .filter_map(|r| {
            let k = r.chosen?;
            Some((k, r.arms[k].diff()?))
        })
        .collect();
    let all: Vec<f64> = pairs.iter().map(|&(_, d)| d).collect();
    let bias = MeanSe::of(&all)?;
    let total = pairs.len() as f64;
    let mut conditional = Vec::new();
    let mut recomposed = 0.0;
    for k in 0..num_arms {
        let d: Vec<f64> = pairs.iter().filter(|p| p.0 == k).map(|p| p.1).collect();
        if let Some(b) = MeanSe::of(&d) {
            let share = d.len() as f64 / total;
            recomposed += share * b.mean;
            conditional.push(ConditionalBias {
                arm: k,
                share,
                bias: b,
            });
        }
    }
    Some(ChosenBias {
        bias,
        conditional,
        recomposed,
    })
}

/// Monte-Carlo estimate of `E[S_k(T)] - mu_k E[N_k(T)]` over uncensored reps.
pub fn wald_residual(records: &[RepRecord], arm: usize) -> Result<WaldResidual> {
    let terms: Vec<f64> = uncensored(records)
        .map(|r| {
            r.arms
                .get(arm)
                .map(ArmRecord::wald_term)
                .ok_or_else(|| Error::domain(format!("arm {arm} out of range")))
        })
        .collect::<Result<_>>()?;
    if terms.len() < 2 {
        return Err(Error::NoData("wald residual needs at least 2 uncensored reps".into()));
    }
    Ok(WaldResidual {
        arm,
        residual: MeanSe::of(&terms).expect("non-empty"),
        observations: uncensored(records).map(|r| r.arms[arm].count).sum(),
    })
}

/// Compares the direct bias estimate with the covariance form over
/// uncensored reps in which arm `arm` was sampled.
///
/// `lhs - rhs` is, up to the `(n-1)/n` covariance normalization, the ratio
/// `mean(x N) / mean(N)`; its standard error comes from the linearized
/// per-rep terms `N_r (x_r - ratio) / N_bar`.
pub fn covariance_bias_check(records: &[RepRecord], arm: usize) -> Result<CovarianceCheck> {
    let pairs: Vec<(f64, f64)> = uncensored(records)
        .filter_map(|r| {
            let a = r.arms.get(arm)?;
            Some((a.diff()?, a.count as f64))
        })
        .collect();
    let n = pairs.len();
    if n < 2 {
        return Err(Error::NoData(format!(
            "covariance check for arm {} needs 2 reps with samples, got {n}",
            arm + 1
        )));
    }
    let nf = n as f64;
    let x_bar = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let n_bar = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let cov = pairs
        .iter()
        .map(|&(x, c)| (x - x_bar) * (c - n_bar))
        .sum::<f64>()
        / (nf - 1.0);
    let lhs = x_bar;
    // mu_hat - mu and mu_hat differ by a constant, so the covariance is the same
    let rhs = if cov == 0.0 { 0.0 } else { -cov / n_bar };
    let ratio = pairs.iter().map(|&(x, c)| x * c).sum::<f64>() / nf / n_bar;
    let paired: Vec<f64> = pairs.iter().map(|&(x, c)| c * (x - ratio) / n_bar).collect();
    let std_err = MeanSe::of(&paired).and_then(|m| m.std_err).unwrap_or(0.0);
    Ok(CovarianceCheck {
        arm,
        lhs,
        rhs,
        discrepancy: lhs - rhs,
        std_err,
        reps: n as u64,
    })
}

/// Exact bias of the stopped mean when a Bernoulli(mu) arm is sampled until
/// its first success.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricStopBias {
    /// `mu log(1/mu) / (1 - mu) - mu`.
    pub closed_form: f64,
    /// `sum_{n >= 1} mu (1-mu)^{n-1} / n - mu`, truncated.
    pub series: f64,
    pub terms: u64,
}

pub fn geometric_stop_bias_exact(mu: f64, tol: f64) -> Result<GeometricStopBias> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::domain(format!("mu must lie in (0,1), got {mu}")));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("tol must be positive"));
    }
    // -ln(mu) / (1 - mu) via ln_1p keeps precision as mu -> 1
    let closed_form = mu * (-(mu - 1.0).ln_1p()) / (1.0 - mu) - mu;

    let q = 1.0 - mu;
    let mut sum = 0.0;
    let mut power = 1.0; // q^{n-1}
    let mut n = 0u64;
    loop {
        n += 1;
        sum += mu * power / n as f64;
        power *= q;
        // tail after n terms is at most q^n / (n + 1)
        if power / (n + 1) as f64 <= tol * 1e-3 {
            break;
        }
    }
    let series = sum - mu;
    if (series - closed_form).abs() > tol {
        return Err(Error::InternalConsistency(format!(
            "closed form {closed_form} and series {series} differ by more than {tol}"
        )));
    }
    Ok(GeometricStopBias {
        closed_form,
        series,
        terms: n,
    })
}
