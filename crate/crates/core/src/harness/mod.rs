//! Scenario configs, the run/summarize pipeline and on-disk formats.

mod builtins;
mod raw;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::choosing::ChoosingRule;
use crate::dist::ArmSpec;
use crate::error::{Error, Result};
use crate::estimators::{bias_report, simulate, wald_residual, BiasReport, MeanSe, RepRecord, WaldResidual};
use crate::model::StrategySpec;
use crate::sampling::SamplingRule;
use crate::stopping::StoppingRule;

pub use builtins::{builtin, builtin_scenarios};
pub use raw::{read_raw, write_raw, RAW_HEADER};

pub const DEFAULT_REPS: u64 = 10_000;

fn default_reps() -> u64 {
    DEFAULT_REPS
}

fn yes() -> bool {
    true
}

/// One experiment: arms, strategy and Monte-Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub arms: Vec<ArmSpec>,
    pub sampling: SamplingRule,
    pub stopping: StoppingRule,
    pub choosing: ChoosingRule,
    #[serde(default = "default_reps")]
    pub reps: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Maximum rounds per rep; reps that have not stopped by then are censored.
    pub cap: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Whether the stopping time has finite mean, so that the Wald and
    /// covariance identities apply.
    #[serde(default = "yes")]
    pub finite_mean_stop: bool,
}

impl ScenarioConfig {
    pub fn strategy(&self) -> StrategySpec {
        StrategySpec::new(self.sampling.clone(), self.stopping.clone(), self.choosing.clone())
    }

    /// Semantic checks beyond the schema, reported with the offending path.
    pub fn validate(&self) -> Result<()> {
        let at = |path: String| move |e: Error| Error::config(path, e.to_string());
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return Err(Error::config("name", "use letters, digits, '-', '_' or '.'"));
        }
        if self.arms.is_empty() {
            return Err(Error::config("arms", "at least one arm is required"));
        }
        for (i, arm) in self.arms.iter().enumerate() {
            arm.validate().map_err(at(format!("arms[{i}]")))?;
        }
        let k = self.arms.len();
        self.sampling.validate(k).map_err(at("sampling".into()))?;
        self.stopping.validate(k).map_err(at("stopping".into()))?;
        self.choosing.validate(k).map_err(at("choosing".into()))?;
        if self.reps == 0 {
            return Err(Error::config("reps", "must be >= 1"));
        }
        if self.cap == 0 {
            return Err(Error::config("cap", "must be >= 1"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let line_of = |span: Option<std::ops::Range<usize>>| {
            span.map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1) as u64)
        };
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse {
            line: line_of(e.span()),
            message: e.message().to_owned(),
        })?;
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::config(path, inner.message().to_owned())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn raw_file_name(&self) -> String {
        format!("{}.raw.csv", self.name)
    }

    pub fn summary_file_name(&self) -> String {
        format!("{}.summary.json", self.name)
    }
}

/// Everything the summary JSON reports. Computed only from raw rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    /// Stopping time over uncensored reps.
    pub stop_time: Option<MeanSe>,
    #[serde(flatten)]
    pub bias: BiasReport,
    pub wald: Vec<WaldResidual>,
}

impl Summary {
    pub fn from_records(scenario: &str, records: &[RepRecord]) -> Result<Self> {
        let bias = bias_report(records)?;
        let num_arms = records[0].arms.len();
        let stops: Vec<f64> = records.iter().filter_map(|r| r.stop_time).map(|t| t as f64).collect();
        let wald = if stops.len() >= 2 {
            (0..num_arms)
                .map(|k| wald_residual(records, k))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Summary {
            scenario: scenario.to_owned(),
            stop_time: MeanSe::of(&stops),
            bias,
            wald,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub raw_path: PathBuf,
    pub summary_path: PathBuf,
    pub records: Vec<RepRecord>,
    pub summary: Summary,
}

/// Simulates every rep of `config`. Runs on the current rayon pool.
pub fn run_records(config: &ScenarioConfig) -> Result<Vec<RepRecord>> {
    config.validate()?;
    simulate(&config.strategy(), &config.arms, config.reps, config.master_seed, config.cap)
}

/// Runs a scenario and writes `<name>.raw.csv` and `<name>.summary.json`
/// into `out_dir` (or the config's own output directory).
pub fn run_scenario(config: &ScenarioConfig, out_dir: Option<&Path>) -> Result<ScenarioOutput> {
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Error::config("output_dir", "no output directory given"))?;
    let records = run_records(config)?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let raw_path = dir.join(config.raw_file_name());
    write_raw(&raw_path, &config.name, &records)?;
    let summary = Summary::from_records(&config.name, &records)?;
    let summary_path = dir.join(config.summary_file_name());
    fs::write(&summary_path, summary.to_json()).map_err(|e| Error::io(&summary_path, e))?;
    Ok(ScenarioOutput {
        raw_path,
        summary_path,
        records,
        summary,
    })
}

/// Recomputes the summary from a raw CSV file.
pub fn summarize(raw_path: &Path) -> Result<Summary> {
    let (scenario, records) = read_raw(raw_path)?;
    Summary::from_records(&scenario, &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UCB: &str = r#"
name = "small-ucb"
reps = 50
master_seed = 3
cap = 20

[[arms]]
family = "gaussian"
mean = 1.0
sd = 1.0

[[arms]]
family = "gaussian"
mean = 2.0
sd = 1.0

[sampling]
rule = "ucb"
delta = 0.1

[stopping]
rule = "fixed-horizon"
horizon = 20

[choosing]
rule = "argmax-mean"
"#;

    #[test]
    fn parses_documented_example() {
        let c = ScenarioConfig::from_toml_str(UCB).unwrap();
        assert_eq!(c.arms.len(), 2);
        assert_eq!(c.sampling, SamplingRule::Ucb { delta: 0.1, warmup: true });
        assert!(c.finite_mean_stop);
        assert_eq!(ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn unknown_key_reports_path() {
        let bad = UCB.replace("delta = 0.1", "delta = 0.1\ndleta = 0.2");
        match ScenarioConfig::from_toml_str(&bad) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "sampling");
                assert!(message.contains("dleta"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let bad = UCB.replacen("sd = 1.0", "sd = \"one\"", 1);
        match ScenarioConfig::from_toml_str(&bad) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with("arms[0]"), "{path}"),
            other => panic!("{other:?}"),
        }
        let bad = UCB.replace("name = \"small-ucb\"", "name = \"small-ucb\"\ncolour = 1");
        assert!(matches!(ScenarioConfig::from_toml_str(&bad), Err(Error::Config { .. })));
    }

    #[test]
    fn semantic_errors_report_path() {
        let bad = UCB.replace("delta = 0.1", "delta = 1.5");
        match ScenarioConfig::from_toml_str(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "sampling"),
            other => panic!("{other:?}"),
        }
        let bad = UCB.replacen("sd = 1.0", "sd = -1.0", 1);
        match ScenarioConfig::from_toml_str(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "arms[0]"),
            other => panic!("{other:?}"),
        }
        let bad = UCB.replace("rule = \"argmax-mean\"", "rule = \"fixed-arm\"\narm = 3");
        assert!(matches!(ScenarioConfig::from_toml_str(&bad), Err(Error::Config { .. })));
        let bad = UCB.replace("rule = \"argmax-mean\"", "rule = \"fixed-arm\"\narm = 0");
        assert!(matches!(ScenarioConfig::from_toml_str(&bad), Err(Error::Config { .. })));
        let bad = UCB.replace("reps = 50", "reps = 0");
        assert!(matches!(ScenarioConfig::from_toml_str(&bad), Err(Error::Config { .. })));
    }

    #[test]
    fn syntax_error_has_line() {
        let bad = UCB.replace("cap = 20", "cap = = 20");
        match ScenarioConfig::from_toml_str(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn summary_roundtrips_through_raw() {
        let dir = tempfile::tempdir().unwrap();
        let c = ScenarioConfig::from_toml_str(UCB).unwrap();
        let out = run_scenario(&c, Some(dir.path())).unwrap();
        let again = summarize(&out.raw_path).unwrap();
        assert_eq!(again, out.summary);
        assert_eq!(again.to_json(), fs::read_to_string(&out.summary_path).unwrap());
    }
}
