use std::fs;

use proptest::prelude::*;

use bandit_bias::harness::{run_scenario, summarize, ScenarioConfig};
use bandit_bias::lab::{replay_with_perturbation, verdict_on, Clause, Direction};
use bandit_bias::rng::SeedStream;
use bandit_bias::{run_strategy, ArmSpec, ChoosingRule, CounterfactualTable, SamplingRule, StoppingRule, StrategySpec};

fn sampling_rules() -> impl Strategy<Value = SamplingRule> {
    prop_oneof![
        Just(SamplingRule::RoundRobin),
        Just(SamplingRule::UniformRandom),
        Just(SamplingRule::Greedy { warmup: true }),
        (0.0f64..=1.0).prop_map(|epsilon| SamplingRule::EpsGreedy { epsilon, warmup: true }),
        (0.01f64..0.99).prop_map(|delta| SamplingRule::Ucb { delta, warmup: true }),
        Just(SamplingRule::lil_ucb_default()),
        Just(SamplingRule::thompson_gaussian_default()),
    ]
}

fn arms() -> impl Strategy<Value = Vec<ArmSpec>> {
    proptest::collection::vec((-2.0f64..2.0, 0.2f64..3.0), 2..5)
        .prop_map(|v| v.into_iter().map(|(m, sd)| ArmSpec::gaussian(m, sd)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn runs_are_pure_and_replay_against_their_table(
        rule in sampling_rules(),
        arms in arms(),
        seed in any::<u64>(),
        horizon in 1u64..80,
    ) {
        let s = StrategySpec::new(rule, StoppingRule::FixedHorizon { horizon }, ChoosingRule::ArgmaxCount);
        let table = CounterfactualTable::new(seed, arms).unwrap();
        let a = run_strategy(&s, &table, &SeedStream::new(seed), horizon).unwrap();
        let b = run_strategy(&s, &table, &SeedStream::new(seed), horizon).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.replays_against(&table));
        prop_assert_eq!(a.counts().iter().sum::<u64>(), horizon);
    }

    #[test]
    fn overriding_a_cell_with_its_own_value_changes_nothing(
        rule in sampling_rules(),
        arms in arms(),
        seed in any::<u64>(),
        row in 1u64..20,
        pick in any::<prop::sample::Index>(),
    ) {
        let arm = pick.index(arms.len());
        let s = StrategySpec::new(rule, StoppingRule::FixedHorizon { horizon: 40 }, ChoosingRule::ArgmaxCount);
        let table = CounterfactualTable::new(seed, arms.clone()).unwrap();
        let base = run_strategy(&s, &table, &SeedStream::new(seed), 40).unwrap();
        let v = table.cell(row, arm).unwrap();
        let r = replay_with_perturbation(&s, arms, seed, (row, arm), &[v], 40).unwrap();
        prop_assert_eq!(&r[0].trace, &base);
    }

    #[test]
    fn ucb_counts_weakly_increase_in_own_reward(
        seed in any::<u64>(),
        row in 1u64..6,
        arm in 0usize..3,
        lo in -3.0f64..0.0,
        step in 0.01f64..3.0,
    ) {
        let s = StrategySpec::new(
            SamplingRule::Ucb { delta: 0.1, warmup: true },
            StoppingRule::FixedHorizon { horizon: 30 },
            ChoosingRule::ArgmaxMean,
        );
        let arms = vec![ArmSpec::gaussian(0.0, 1.0), ArmSpec::gaussian(0.3, 1.0), ArmSpec::gaussian(0.6, 1.0)];
        let grid = [lo, lo + step, lo + 2.0 * step];
        let r = replay_with_perturbation(&s, arms, seed, (row, arm), &grid, 30).unwrap();
        let v = verdict_on(Clause::SamplingNk { t: None }, Direction::NonDecreasing, arm, &r).unwrap();
        prop_assert!(v.passed(), "{:?}", v.witness);
        let c = verdict_on(Clause::ChoosingIndicator, Direction::NonDecreasing, arm, &r).unwrap();
        prop_assert!(!c.inconclusive);
    }
}

#[test]
fn censored_reps_are_counted_and_survive_summarize() {
    let cfg = ScenarioConfig {
        name: "walk-short-cap".into(),
        arms: vec![ArmSpec::gaussian(1.0, 1.0)],
        sampling: SamplingRule::RoundRobin,
        stopping: StoppingRule::LineCrossing {
            arm: 0,
            slope: 1.0,
            intercept: 3.0,
        },
        choosing: ChoosingRule::FixedArm { arm: 0 },
        reps: 300,
        master_seed: 4,
        cap: 40,
        output_dir: None,
        finite_mean_stop: false,
    };
    let dir = tempfile::tempdir().unwrap();
    let out = run_scenario(&cfg, Some(dir.path())).unwrap();
    let censored = out.records.iter().filter(|r| r.is_censored()).count() as u64;
    assert!(censored > 0);
    assert_eq!(out.summary.bias.censored_reps, censored);
    let again = summarize(&out.raw_path).unwrap();
    assert_eq!(again, out.summary);

    // keep only the first censored rep's row and check the count is 1
    let text = fs::read_to_string(&out.raw_path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let censored_row = lines.find(|l| l.ends_with(",1")).unwrap();
    let uncensored: Vec<&str> = text.lines().skip(1).filter(|l| l.ends_with(",0")).take(4).collect();
    let p = dir.path().join("one-censored.csv");
    fs::write(&p, [header, censored_row].into_iter().chain(uncensored).collect::<Vec<_>>().join("\n")).unwrap();
    let s = summarize(&p).unwrap();
    assert_eq!(s.bias.censored_reps, 1);
}
