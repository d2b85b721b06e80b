//! Built-in scenarios.

use super::{ScenarioConfig, DEFAULT_REPS};
use crate::choosing::ChoosingRule;
use crate::dist::ArmSpec;
use crate::sampling::SamplingRule;
use crate::stopping::StoppingRule;

const MASTER_SEED: u64 = 20_190_418;

fn gaussians(means: &[f64]) -> Vec<ArmSpec> {
    means.iter().map(|&m| ArmSpec::gaussian(m, 1.0)).collect()
}

fn scenario(
    name: String,
    arms: Vec<ArmSpec>,
    sampling: SamplingRule,
    stopping: StoppingRule,
    choosing: ChoosingRule,
    cap: u64,
) -> ScenarioConfig {
    ScenarioConfig {
        name,
        arms,
        sampling,
        stopping,
        choosing,
        reps: DEFAULT_REPS,
        master_seed: MASTER_SEED,
        cap,
        output_dir: None,
        finite_mean_stop: true,
    }
}

/// All built-in scenarios, in a fixed order.
pub fn builtin_scenarios() -> Vec<ScenarioConfig> {
    let mut out = Vec::new();

    // fixed-time sampling on three unit-variance Gaussian arms
    let horizon = 200;
    for (name, rule) in [
        ("greedy-fixed-T", SamplingRule::Greedy { warmup: true }),
        ("ucb-fixed-T", SamplingRule::Ucb { delta: 0.1, warmup: true }),
        ("thompson-fixed-T", SamplingRule::thompson_gaussian_default()),
    ] {
        out.push(scenario(
            name.into(),
            gaussians(&[1.0, 2.0, 3.0]),
            rule,
            StoppingRule::FixedHorizon { horizon },
            ChoosingRule::FixedArm { arm: 0 },
            horizon,
        ));
    }

    // one-sided sequential likelihood ratio test, arms alternating
    for (name, means) in [("slrt-null", [0.0, 0.0]), ("slrt-alt", [1.0, 0.0])] {
        out.push(scenario(
            name.into(),
            gaussians(&means),
            SamplingRule::RoundRobin,
            StoppingRule::Slrt {
                w: 10.0,
                alpha: 0.1,
                sigma: 1.0,
                max_time: 200,
            },
            ChoosingRule::FixedArm { arm: 0 },
            200,
        ));
    }

    for g in [1u32, 3, 5] {
        let g_f = f64::from(g);
        out.push(scenario(
            format!("lilucb-gap-{g}"),
            gaussians(&[g_f, 0.0, -g_f]),
            SamplingRule::lil_ucb_default(),
            StoppingRule::lil_ucb_for_beta(1.0),
            ChoosingRule::ArgmaxCount,
            1_000_000,
        ));
    }

    for g in [1u32, 3, 5] {
        let g_f = f64::from(g);
        let max_cycles = 1000;
        out.push(scenario(
            format!("gapstop-gap-{g}"),
            gaussians(&[g_f, 0.0, -g_f]),
            SamplingRule::RoundRobin,
            StoppingRule::GapStop {
                delta: 0.7 * g_f,
                max_cycles,
            },
            ChoosingRule::ArgmaxMean,
            3 * max_cycles,
        ));
    }

    // stop at the first success of arm 1; arm 2 only interleaves
    for mu in ["0.2", "0.5", "0.8"] {
        out.push(scenario(
            format!("example1-mu-{mu}"),
            vec![ArmSpec::bernoulli(mu.parse().unwrap()), ArmSpec::bernoulli(0.5)],
            SamplingRule::RoundRobin,
            StoppingRule::FirstSuccess { arm: 0, target: 1.0 },
            ChoosingRule::FixedArm { arm: 0 },
            100_000,
        ));
    }

    // Gaussian walk stopped when S_t >= t + b; E[T] is infinite at this slope
    for b in [5u32, 10] {
        out.push(ScenarioConfig {
            finite_mean_stop: false,
            ..scenario(
                format!("example2-b-{b}"),
                gaussians(&[1.0]),
                SamplingRule::RoundRobin,
                StoppingRule::LineCrossing {
                    arm: 0,
                    slope: 1.0,
                    intercept: f64::from(b),
                },
                ChoosingRule::FixedArm { arm: 0 },
                100_000,
            )
        });
    }

    // one standard normal draw per arm, report the largest
    for k in [2usize, 10] {
        out.push(scenario(
            format!("example4-k-{k}"),
            gaussians(&vec![0.0; k]),
            SamplingRule::RoundRobin,
            StoppingRule::FixedHorizon { horizon: k as u64 },
            ChoosingRule::ArgmaxLastObservation,
            k as u64,
        ));
    }

    out
}

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    builtin_scenarios().into_iter().find(|c| c.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid_unique_and_pure() {
        let a = builtin_scenarios();
        assert!(a.len() >= 13);
        assert_eq!(a, builtin_scenarios());
        let mut names: Vec<_> = a.iter().map(|c| c.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), a.len());
        for c in &a {
            c.validate().unwrap();
            let back = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
            assert_eq!(&back, c);
        }
    }
}
