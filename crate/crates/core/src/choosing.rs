//! Choosing rules: which arm `kappa` to report once the experiment stops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Trace;
use crate::rng::{slot, SeedStream};
use crate::sampling::argmax_lowest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChoosingRule {
    FixedArm {
        #[serde(with = "crate::one_based")]
        arm: usize,
    },
    ArgmaxMean,
    /// Report the arm of rank `r` (by sample mean, descending) with
    /// probability `weights[r]`. Weights are non-increasing and sum to one.
    RankProbability { weights: Vec<f64> },
    ArgmaxCount,
    /// Report the arm whose latest observation is largest.
    ArgmaxLastObservation,
}

impl ChoosingRule {
    pub fn validate(&self, num_arms: usize) -> Result<()> {
        match self {
            ChoosingRule::FixedArm { arm } => {
                if *arm >= num_arms {
                    return Err(Error::domain(format!(
                        "fixed arm {} out of range for {num_arms} arms",
                        arm + 1
                    )));
                }
            }
            ChoosingRule::RankProbability { weights } => {
                if weights.len() != num_arms {
                    return Err(Error::domain(format!(
                        "rank weights need {num_arms} entries, got {}",
                        weights.len()
                    )));
                }
                if weights.iter().any(|&w| !(w >= 0.0)) {
                    return Err(Error::domain("rank weights must be non-negative"));
                }
                if weights.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::domain("rank weights must be non-increasing"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::domain(format!("rank weights sum to {total}")));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn means(trace: &Trace) -> Result<Vec<f64>> {
    (0..trace.num_arms())
        .map(|k| trace.sample_mean(k).ok_or(Error::UndefinedMean { arm: k }))
        .collect()
}

/// Picks the reported arm from a stopped (or otherwise complete) trace.
///
/// `RankProbability` is realized as a mixture over "top-m" layers: with
/// `d_m = p_m - p_{m+1}`, layer `m` is drawn with probability `m * d_m` from
/// one uniform, then the top-`m` arm with the smallest per-arm tie uniform is
/// reported. Rank `r` is reported with probability `sum_{m >= r} d_m = p_r`,
/// and raising an arm's mean can only add it to layers, never remove it.
pub fn choose(rule: &ChoosingRule, trace: &Trace, aux: &SeedStream) -> Result<usize> {
    match rule {
        ChoosingRule::FixedArm { arm } => Ok(*arm),
        ChoosingRule::ArgmaxMean => Ok(argmax_lowest(means(trace)?)),
        ChoosingRule::ArgmaxCount => Ok(argmax_lowest(trace.counts().iter().map(|&n| n as f64))),
        ChoosingRule::ArgmaxLastObservation => {
            let last: Vec<f64> = (0..trace.num_arms())
                .map(|k| trace.last_reward(k).ok_or(Error::UndefinedMean { arm: k }))
                .collect::<Result<_>>()?;
            Ok(argmax_lowest(last))
        }
        ChoosingRule::RankProbability { weights } => {
            let m = means(trace)?;
            let mut order: Vec<usize> = (0..m.len()).collect();
            // descending mean, lowest index first among ties
            order.sort_by(|&a, &b| m[b].total_cmp(&m[a]).then(a.cmp(&b)));

            let u = aux.choice(slot::RANK_LAYER, 0);
            let mut layer = weights.len();
            let mut cum = 0.0;
            for r in 0..weights.len() {
                let next = weights.get(r + 1).copied().unwrap_or(0.0);
                let mass = (r + 1) as f64 * (weights[r] - next);
                if mass > 0.0 {
                    cum += mass;
                    layer = r + 1;
                    if u < cum {
                        break;
                    }
                }
            }
            let pick = order[..layer]
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    aux.choice(slot::RANK_TIE, a as u64)
                        .total_cmp(&aux.choice(slot::RANK_TIE, b as u64))
                })
                .expect("layer is non-empty");
            Ok(pick)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(hist: &[(usize, f64)], k: usize) -> Trace {
        Trace::from_history(k, hist).unwrap()
    }

    #[test]
    fn argmax_count() {
        let mut hist = vec![(0, 0.0); 19];
        hist.push((1, 5.0));
        hist.push((2, 5.0));
        let tr = trace(&hist, 3);
        assert_eq!(choose(&ChoosingRule::ArgmaxCount, &tr, &SeedStream::new(0)).unwrap(), 0);
    }

    #[test]
    fn argmax_last_observation() {
        let tr = trace(&[(0, 0.3), (1, 1.7)], 2);
        assert_eq!(
            choose(&ChoosingRule::ArgmaxLastObservation, &tr, &SeedStream::new(0)).unwrap(),
            1
        );
    }

    #[test]
    fn undefined_mean_errors() {
        let tr = trace(&[(0, 0.3)], 2);
        assert!(matches!(
            choose(&ChoosingRule::ArgmaxMean, &tr, &SeedStream::new(0)),
            Err(Error::UndefinedMean { arm: 1 })
        ));
        assert_eq!(choose(&ChoosingRule::FixedArm { arm: 1 }, &tr, &SeedStream::new(0)).unwrap(), 1);
    }

    #[test]
    fn degenerate_rank_weights_equal_argmax() {
        let rule = ChoosingRule::RankProbability {
            weights: vec![1.0, 0.0, 0.0],
        };
        for seed in 0..200u64 {
            let vals: Vec<(usize, f64)> = (0..3)
                .map(|k| (k, crate::rng::keyed_uniform(seed, crate::rng::Domain::Sweep, &[k as u64])))
                .collect();
            let tr = trace(&vals, 3);
            let s = SeedStream::new(seed);
            assert_eq!(
                choose(&rule, &tr, &s).unwrap(),
                choose(&ChoosingRule::ArgmaxMean, &tr, &s).unwrap()
            );
        }
    }

    #[test]
    fn rank_weights_realized_frequencies() {
        // ranks fixed by means (3, 2, 1); arm k has rank k
        let tr = trace(&[(0, 3.0), (1, 2.0), (2, 1.0)], 3);
        let w = vec![0.5, 0.3, 0.2];
        let rule = ChoosingRule::RankProbability { weights: w.clone() };
        let n = 60_000;
        let mut hits = [0usize; 3];
        for seed in 0..n {
            hits[choose(&rule, &tr, &SeedStream::new(seed)).unwrap()] += 1;
        }
        for k in 0..3 {
            let f = hits[k] as f64 / n as f64;
            let se = (w[k] * (1.0 - w[k]) / n as f64).sqrt();
            assert!((f - w[k]).abs() < 4.0 * se, "arm {k}: {f}");
        }
    }

    #[test]
    fn weights_validation() {
        let bad = ChoosingRule::RankProbability { weights: vec![0.2, 0.8] };
        assert!(bad.validate(2).is_err());
        let bad = ChoosingRule::RankProbability { weights: vec![0.6, 0.3] };
        assert!(bad.validate(2).is_err());
        let ok = ChoosingRule::RankProbability { weights: vec![0.6, 0.4] };
        assert!(ok.validate(2).is_ok());
        assert!(ok.validate(3).is_err());
        assert!(ChoosingRule::FixedArm { arm: 2 }.validate(2).is_err());
    }

    proptest::proptest! {
        #[test]
        fn argmax_mean_ignores_common_shift(
            vals in proptest::collection::vec(-5.0f64..5.0, 2..8),
            shift in -10.0f64..10.0,
        ) {
            let mut sorted = vals.clone();
            sorted.sort_by(f64::total_cmp);
            proptest::prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-9));
            let k = vals.len();
            let a: Vec<(usize, f64)> = vals.iter().copied().enumerate().collect();
            let b: Vec<(usize, f64)> = vals.iter().map(|v| v + shift).enumerate().collect();
            let s = SeedStream::new(0);
            proptest::prop_assert_eq!(
                choose(&ChoosingRule::ArgmaxMean, &trace(&a, k), &s).unwrap(),
                choose(&ChoosingRule::ArgmaxMean, &trace(&b, k), &s).unwrap()
            );
        }
    }
}
