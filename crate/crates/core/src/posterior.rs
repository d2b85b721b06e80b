//! Posterior draws for one-parameter exponential families with conjugate
//! priors, by inversion of the posterior CDF at a supplied uniform.
//!
//! With the uniform held fixed, the draw is a non-decreasing function of the
//! sufficient-statistic sum whenever the family satisfies the usual
//! stochastic-ordering condition on its prior. That is what makes Thompson
//! sampling built on these draws optimistic.

use std::fmt;
use std::sync::Arc;

use crate::dist::normal_quantile;
use crate::error::{Error, Result};

/// User-supplied inverse posterior CDF: `(suff_stat_sum, count, u) -> draw`.
pub type InversePosteriorCdf = Arc<dyn Fn(f64, u64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ConjugateFamily {
    /// Gaussian likelihood with known noise sd, Gaussian prior on the mean.
    GaussianGaussian {
        prior_mean: f64,
        prior_sd: f64,
        noise_sd: f64,
    },
    /// Bernoulli likelihood, Beta prior with integer pseudo-counts.
    BetaBernoulli {
        prior_successes: u32,
        prior_failures: u32,
    },
    PoissonGamma,
    ExponentialGamma,
    Custom(InversePosteriorCdf),
}

impl fmt::Debug for ConjugateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConjugateFamily::GaussianGaussian {
                prior_mean,
                prior_sd,
                noise_sd,
            } => f
                .debug_struct("GaussianGaussian")
                .field("prior_mean", prior_mean)
                .field("prior_sd", prior_sd)
                .field("noise_sd", noise_sd)
                .finish(),
            ConjugateFamily::BetaBernoulli {
                prior_successes,
                prior_failures,
            } => f
                .debug_struct("BetaBernoulli")
                .field("prior_successes", prior_successes)
                .field("prior_failures", prior_failures)
                .finish(),
            ConjugateFamily::PoissonGamma => f.write_str("PoissonGamma"),
            ConjugateFamily::ExponentialGamma => f.write_str("ExponentialGamma"),
            ConjugateFamily::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Draw of the mean parameter from the posterior after `count` observations
/// whose sufficient statistics sum to `suff_stat_sum`.
pub fn posterior_sample(
    family: &ConjugateFamily,
    suff_stat_sum: f64,
    count: u64,
    u: f64,
) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("posterior draw needs u in (0,1), got {u}")));
    }
    match family {
        ConjugateFamily::GaussianGaussian {
            prior_mean,
            prior_sd,
            noise_sd,
        } => {
            let prior_prec = 1.0 / (prior_sd * prior_sd);
            let noise_prec = 1.0 / (noise_sd * noise_sd);
            let prec = prior_prec + count as f64 * noise_prec;
            let mean = (prior_mean * prior_prec + suff_stat_sum * noise_prec) / prec;
            Ok(mean + normal_quantile(u) / prec.sqrt())
        }
        ConjugateFamily::BetaBernoulli {
            prior_successes,
            prior_failures,
        } => {
            let s = suff_stat_sum.round();
            if (suff_stat_sum - s).abs() > 1e-9 || s < 0.0 || s > count as f64 {
                return Err(Error::domain(format!(
                    "beta-bernoulli needs an integer success count in [0, {count}], got {suff_stat_sum}"
                )));
            }
            let a = *prior_successes as u64 + s as u64;
            let b = *prior_failures as u64 + count - s as u64;
            Ok(beta_quantile_integer(a, b, u))
        }
        ConjugateFamily::PoissonGamma => Err(Error::UnsupportedFamily(
            "poisson-gamma has no built-in inverse posterior CDF; supply ConjugateFamily::Custom".into(),
        )),
        ConjugateFamily::ExponentialGamma => Err(Error::UnsupportedFamily(
            "exponential-gamma has no built-in inverse posterior CDF; supply ConjugateFamily::Custom"
                .into(),
        )),
        ConjugateFamily::Custom(f) => Ok(f(suff_stat_sum, count, u)),
    }
}

/// CDF of Beta(a, b) for positive integers, via the binomial tail
/// `I_x(a, b) = P(Bin(a + b - 1, x) >= a)`.
fn beta_cdf_integer(a: u64, b: u64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let n = a + b - 1;
    // pmf computed in log space to avoid overflow for large n
    let ln_x = x.ln();
    let ln_1x = (-x).ln_1p();
    let mut ln_choose = 0.0; // ln C(n, 0)
    let mut total = 0.0;
    for j in 0..=n {
        if j > 0 {
            ln_choose += ((n - j + 1) as f64).ln() - (j as f64).ln();
        }
        if j >= a {
            total += (ln_choose + j as f64 * ln_x + (n - j) as f64 * ln_1x).exp();
        }
    }
    total.clamp(0.0, 1.0)
}

/// Inverse CDF of Beta(a, b), integer parameters; zero pseudo-counts give the
/// degenerate limits.
fn beta_quantile_integer(a: u64, b: u64, u: f64) -> f64 {
    match (a, b) {
        (0, 0) => 0.5,
        (0, _) => 0.0,
        (_, 0) => 1.0,
        _ => {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if beta_cdf_integer(a, b, mid) < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            0.5 * (lo + hi)
        }
    }
}
