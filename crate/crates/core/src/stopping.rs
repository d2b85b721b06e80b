//! Stopping rules. Each rule sees only the history up to the current round.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Trace;

/// Sequence of thresholds `c_t` for [`StoppingRule::MeanBoundary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Boundary {
    Constant { value: f64 },
    /// `c_t = intercept + slope * t`.
    Linear { intercept: f64, slope: f64 },
    /// `c_t = values[t - 1]`; the last value repeats past the end.
    Sequence { values: Vec<f64> },
}

impl Boundary {
    pub fn at(&self, t: u64) -> f64 {
        match self {
            Boundary::Constant { value } => *value,
            Boundary::Linear { intercept, slope } => intercept + slope * t as f64,
            Boundary::Sequence { values } => {
                let i = (t.max(1) - 1) as usize;
                values[i.min(values.len() - 1)]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StoppingRule {
    /// Stop at a fixed round `T`.
    FixedHorizon { horizon: u64 },
    /// Stop the first time arm `arm` returns `target`.
    FirstSuccess {
        #[serde(with = "crate::one_based")]
        arm: usize,
        target: f64,
    },
    /// Stop the first time `mu_hat_arm(t) > c_t`.
    MeanBoundary {
        #[serde(with = "crate::one_based")]
        arm: usize,
        boundary: Boundary,
    },
    /// Stop the first time `S_arm(t) >= slope * N_arm(t) + intercept`.
    LineCrossing {
        #[serde(with = "crate::one_based")]
        arm: usize,
        slope: f64,
        intercept: f64,
    },
    /// One-sided sequential likelihood ratio test of arm 1 against arm 2,
    /// checked at even rounds and truncated at `max_time`.
    Slrt {
        w: f64,
        alpha: f64,
        sigma: f64,
        max_time: u64,
    },
    /// lil'UCB stopping: after the first `K` rounds, stop once some arm has
    /// `N_k >= 1 + lambda * sum_{j != k} N_j`.
    LilUcbCount { lambda: f64 },
    /// At the end of each sampling cycle of length `K`, stop once the largest
    /// sample mean beats the runner-up by more than `delta`; stop anyway
    /// after `max_cycles` cycles.
    GapStop { delta: f64, max_cycles: u64 },
}

impl StoppingRule {
    /// lil'UCB stopping with `lambda = ((2 + beta) / beta)^2`.
    pub fn lil_ucb_for_beta(beta: f64) -> Self {
        StoppingRule::LilUcbCount {
            lambda: ((2.0 + beta) / beta).powi(2),
        }
    }

    pub fn validate(&self, num_arms: usize) -> Result<()> {
        let arm_ok = |arm: usize| {
            if arm < num_arms {
                Ok(())
            } else {
                Err(Error::domain(format!("stopping rule references arm {} of {num_arms}", arm + 1)))
            }
        };
        match self {
            StoppingRule::FixedHorizon { horizon } => {
                if *horizon == 0 {
                    return Err(Error::domain("horizon must be >= 1"));
                }
            }
            StoppingRule::FirstSuccess { arm, .. } => arm_ok(*arm)?,
            StoppingRule::MeanBoundary { arm, boundary } => {
                arm_ok(*arm)?;
                if let Boundary::Sequence { values } = boundary {
                    if values.is_empty() {
                        return Err(Error::domain("boundary sequence is empty"));
                    }
                }
            }
            StoppingRule::LineCrossing { arm, intercept, .. } => {
                arm_ok(*arm)?;
                if !(*intercept > 0.0) {
                    return Err(Error::domain(format!("intercept must be > 0, got {intercept}")));
                }
            }
            StoppingRule::Slrt {
                w,
                alpha,
                sigma,
                max_time,
            } => {
                if num_arms < 2 {
                    return Err(Error::domain("slrt needs two arms"));
                }
                if !(*w > 0.0) || !(*sigma > 0.0) {
                    return Err(Error::domain("slrt needs w > 0 and sigma > 0"));
                }
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
                }
                if *max_time == 0 {
                    return Err(Error::domain("max_time must be >= 1"));
                }
            }
            StoppingRule::LilUcbCount { lambda } => {
                if !(*lambda > 0.0) {
                    return Err(Error::domain(format!("lambda must be > 0, got {lambda}")));
                }
            }
            StoppingRule::GapStop { delta, max_cycles } => {
                if !(*delta > 0.0) || *max_cycles == 0 {
                    return Err(Error::domain("gap stop needs delta > 0 and max_cycles >= 1"));
                }
            }
        }
        Ok(())
    }
}

/// Right-hand side of the one-sided SLRT boundary at even round `t`:
/// `(2 sigma / t) sqrt((t + 2w) log(sqrt((t + 2w) / (2w)) / (2 alpha) + 1))`.
pub fn slrt_boundary(t: u64, w: f64, alpha: f64, sigma: f64) -> Result<f64> {
    if t < 2 || t % 2 == 1 {
        return Err(Error::domain(format!("slrt boundary needs an even t >= 2, got {t}")));
    }
    Ok(slrt_boundary_unchecked(t, w, alpha, sigma))
}

#[inline]
fn slrt_boundary_unchecked(t: u64, w: f64, alpha: f64, sigma: f64) -> f64 {
    let t = t as f64;
    let v = t + 2.0 * w;
    let log_term = ((v / (2.0 * w)).sqrt() / (2.0 * alpha) + 1.0).ln();
    2.0 * sigma / t * (v * log_term).sqrt()
}

/// Whether the experiment stops at the current round `t = history.time()`.
///
/// Rules that reference an unsampled arm's mean do not stop.
pub fn should_stop(rule: &StoppingRule, history: &Trace) -> bool {
    let t = history.time();
    match rule {
        StoppingRule::FixedHorizon { horizon } => t >= *horizon,
        StoppingRule::FirstSuccess { arm, target } => {
            matches!(history.last_action(), Some((a, y)) if a == *arm && y == *target)
        }
        StoppingRule::MeanBoundary { arm, boundary } => {
            history.sample_mean(*arm).is_some_and(|m| m > boundary.at(t))
        }
        StoppingRule::LineCrossing {
            arm,
            slope,
            intercept,
        } => history.sum(*arm) >= slope * history.count(*arm) as f64 + intercept,
        StoppingRule::Slrt {
            w,
            alpha,
            sigma,
            max_time,
        } => {
            if t >= *max_time {
                return true;
            }
            if t < 2 || t % 2 == 1 {
                return false;
            }
            match (history.sample_mean(0), history.sample_mean(1)) {
                (Some(m1), Some(m2)) => m1 - m2 >= slrt_boundary_unchecked(t, *w, *alpha, *sigma),
                _ => false,
            }
        }
        StoppingRule::LilUcbCount { lambda } => {
            let k = history.num_arms() as u64;
            if t <= k {
                return false;
            }
            history
                .counts()
                .iter()
                .any(|&n| n as f64 >= 1.0 + lambda * (t - n) as f64)
        }
        StoppingRule::GapStop { delta, max_cycles } => {
            let k = history.num_arms() as u64;
            if t == 0 || !t.is_multiple_of(k) || t > k * max_cycles {
                return false;
            }
            if t == k * max_cycles {
                return true;
            }
            let mut first = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            for arm in 0..history.num_arms() {
                let Some(m) = history.sample_mean(arm) else {
                    return false;
                };
                if m > first {
                    second = first;
                    first = m;
                } else if m > second {
                    second = m;
                }
            }
            first > second + delta
        }
    }
}
