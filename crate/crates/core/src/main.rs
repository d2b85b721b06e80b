use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bandit_bias::harness::{self, ScenarioConfig, ScenarioOutput};
use bandit_bias::lab::{self, CertifyReport};
use bandit_bias::Error;

#[derive(Parser)]
#[command(name = "bandit-bias", version, about = "Sample-mean bias laboratory for multi-armed bandits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's rep count.
        #[arg(long)]
        reps: Option<u64>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores). Output does not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a built-in scenario.
    RunBuiltin {
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List built-in scenarios.
    ListBuiltins,
    /// Recompute a summary from a raw CSV and print it as JSON.
    Summarize { raw: PathBuf },
    /// Certify a rule set by randomized single-cell perturbation sweeps.
    Certify {
        /// Rule set name, or `all`.
        #[arg(long)]
        rule_set: String,
        #[arg(long, default_value_t = 200)]
        sweeps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Error(Error),
    /// The command ran but its outcome is a negative result.
    Outcome(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error>
where
    T: Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Domain("--threads must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InternalConsistency(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn report_run(out: &ScenarioOutput) {
    let s = &out.summary;
    println!("scenario {}: {} reps, {} censored", s.scenario, s.bias.reps, s.bias.censored_reps);
    for a in &s.bias.arms {
        match a.bias {
            Some(b) => println!(
                "  arm {}: bias {:+.5} (se {:.5})",
                a.arm + 1,
                b.mean,
                b.std_err.unwrap_or(f64::NAN)
            ),
            None => println!("  arm {}: never sampled", a.arm + 1),
        }
    }
    if let Some(c) = &s.bias.chosen {
        println!(
            "  chosen: bias {:+.5} (se {:.5})",
            c.bias.mean,
            c.bias.std_err.unwrap_or(f64::NAN)
        );
    }
    println!("  raw: {}", out.raw_path.display());
    println!("  summary: {}", out.summary_path.display());
}

fn write_certify(report: &CertifyReport, dir: &Path) -> Result<PathBuf, Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let path = dir.join(format!("{}.certify.csv", report.rule_set));
    let io = |e: csv::Error| Error::Io {
        path: path.clone(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    for row in &report.rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            reps,
            seed,
            threads,
            out,
        } => {
            let mut cfg = ScenarioConfig::from_toml_file(&config)?;
            if let Some(r) = reps {
                cfg.reps = r;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let output = with_threads(threads, || harness::run_scenario(&cfg, Some(&out)))??;
            report_run(&output);
        }
        Command::RunBuiltin { name, out, threads } => {
            let cfg = harness::builtin(&name)
                .ok_or_else(|| Error::Domain(format!("no builtin named {name:?}; see list-builtins")))?;
            let output = with_threads(threads, || harness::run_scenario(&cfg, Some(&out)))??;
            report_run(&output);
        }
        Command::ListBuiltins => {
            for c in harness::builtin_scenarios() {
                println!("{}", c.name);
            }
        }
        Command::Summarize { raw } => {
            print!("{}", harness::summarize(&raw)?.to_json());
        }
        Command::Certify {
            rule_set,
            sweeps,
            seed,
            threads,
            out,
        } => {
            let sets = if rule_set == "all" {
                lab::rule_sets()
            } else {
                vec![lab::rule_set(&rule_set).ok_or_else(|| {
                    let names: Vec<_> = lab::rule_sets().iter().map(|s| s.name).collect();
                    Error::Domain(format!("unknown rule set {rule_set:?}; known: {}", names.join(", ")))
                })?]
            };
            let mut mismatched = Vec::new();
            for set in &sets {
                let report = with_threads(threads, || lab::certify(set, sweeps, seed))??;
                let path = write_certify(&report, &out)?;
                let verdict = if report.certified() { "certified" } else { "rejected" };
                println!(
                    "{}: {verdict} ({} checks, {} failed, {} inconclusive) -> {}",
                    set.name,
                    report.rows.len(),
                    report.failures(),
                    report.inconclusive(),
                    path.display()
                );
                if let Some(w) = report.first_witness() {
                    println!("  witness: sweep {} cell ({}, {}): {}", w.sweep, w.row, w.arm, w.witness);
                }
                if !report.matches_declaration() {
                    mismatched.push(set.name);
                }
            }
            if !mismatched.is_empty() {
                return Err(Failure::Outcome(format!(
                    "outcome contradicts the declared class for: {}",
                    mismatched.join(", ")
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Outcome(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io { .. } => 3,
                ref e if e.is_validation() => 2,
                _ => 1,
            })
        }
    }
}
