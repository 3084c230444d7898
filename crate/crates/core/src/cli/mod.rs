//! Command-line front end: scenario registry, overrides and report output.
//!
//! Exit status is 0 when no asserted check fails, 1 when one does and 2 for
//! usage, configuration or I/O errors.

pub mod config;
pub mod report;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

pub use config::{builtin_names, Scenario, ScenarioConfig};
pub use report::Format;
pub use run::{run_scenario, Check, Relation, Stage, Verdict, VerificationReport};

#[derive(Debug, Parser)]
#[command(
    name = "skewwarp",
    version,
    about = "Numerical verification of skew CR warped products in contact metric manifolds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the built-in scenarios.
    ListScenarios,
    /// Check the almost contact metric and Sasakian identities of the ambient.
    CheckAmbient(RunArgs),
    /// Classify the tangent and normal bundles of the immersion.
    Classify(RunArgs),
    /// Full pipeline including warped-product analysis and the inequality.
    Verify(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Built-in scenario name or path to a JSON scenario.
    pub scenario: String,
    /// Number of sample points.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Sampling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tolerance override `key=value`; `--tol-key value` is also accepted.
    #[arg(long = "tol", value_name = "KEY=VALUE")]
    pub tol: Vec<String>,
    /// Constant override `name=expr`.
    #[arg(long = "set", value_name = "NAME=EXPR")]
    pub set: Vec<String>,
    /// Write the report to this file instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for per-sample work (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Rewrites `--tol-KEY VALUE` and `--tol-KEY=VALUE` into `--tol KEY=VALUE`.
pub fn normalize_args(args: impl IntoIterator<Item = OsString>) -> Vec<OsString> {
    let mut out = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(rest) = arg.to_str().and_then(|s| s.strip_prefix("--tol-")) else {
            out.push(arg);
            continue;
        };
        let pair = match rest.split_once('=') {
            Some((k, v)) => format!("{k}={v}"),
            None => match it.next() {
                Some(v) => format!("{rest}={}", v.to_string_lossy()),
                None => rest.to_string(),
            },
        };
        out.push("--tol".into());
        out.push(pair.into());
    }
    out
}

fn split_pair<'a>(s: &'a str, flag: &str) -> Result<(&'a str, &'a str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| Error::Config {
            path: flag.to_string(),
            msg: format!("expected NAME=VALUE, got '{s}'"),
        })
}

/// Resolves the scenario and applies command-line overrides.
pub fn load_scenario(args: &RunArgs) -> Result<Scenario> {
    let mut cfg = ScenarioConfig::resolve(&args.scenario)?;
    for s in &args.set {
        let (k, v) = split_pair(s, "--set")?;
        cfg.set_constant(k, v)?;
    }
    for t in &args.tol {
        let (k, v) = split_pair(t, "--tol")?;
        let value: f64 = v.parse().map_err(|_| Error::Config {
            path: format!("--tol {k}"),
            msg: format!("'{v}' is not a number"),
        })?;
        cfg.tolerances.set(k, value)?;
    }
    if let Some(n) = args.samples {
        cfg.sampling.count = n;
    }
    if let Some(s) = args.seed {
        cfg.sampling.seed = s;
    }
    cfg.build()
}

fn execute(args: &RunArgs, stage: Stage) -> Result<bool> {
    let scenario = load_scenario(args)?;
    let report = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config {
                path: "--threads".into(),
                msg: e.to_string(),
            })?
            .install(|| run_scenario(&scenario, stage))?,
        None => run_scenario(&scenario, stage)?,
    };
    report.emit(args.format, args.report.as_deref())?;
    Ok(report.passed())
}

fn list() -> Result<()> {
    for name in builtin_names() {
        let cfg = ScenarioConfig::builtin(name)?;
        println!("{name:<34} {}", cfg.description);
    }
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn main_with(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(normalize_args(args)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match &cli.command {
        Command::ListScenarios => list().map(|_| true),
        Command::CheckAmbient(a) => execute(a, Stage::CheckAmbient),
        Command::Classify(a) => execute(a, Stage::Classify),
        Command::Verify(a) => execute(a, Stage::Verify),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn tol_shorthand() {
        let got = normalize_args(os(&[
            "x",
            "verify",
            "ex62",
            "--tol-bishop",
            "1e-5",
            "--tol-f-recovery=1e-3",
            "--tol",
            "rank=1",
        ]));
        assert_eq!(
            got,
            os(&[
                "x",
                "verify",
                "ex62",
                "--tol",
                "bishop=1e-5",
                "--tol",
                "f-recovery=1e-3",
                "--tol",
                "rank=1"
            ])
        );
    }

    #[test]
    fn overrides_apply() {
        let cli = Cli::try_parse_from(normalize_args(os(&[
            "x",
            "verify",
            "ex62",
            "--set",
            "k=2",
            "--tol-bishop",
            "1e-5",
            "--samples",
            "3",
            "--seed",
            "7",
        ])))
        .unwrap();
        let Command::Verify(a) = cli.command else {
            panic!()
        };
        let s = load_scenario(&a).unwrap();
        assert_eq!(s.constants["k"], 2.0);
        assert_eq!(s.tolerances.bishop, 1e-5);
        assert_eq!((s.samples, s.seed), (3, 7));
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for extra in [
            ["--set", "nope=1"],
            ["--tol-nope", "1"],
            ["--tol-bishop", "abc"],
            ["--set", "k"],
        ] {
            let mut v = vec!["x", "verify", "ex62"];
            v.extend(extra);
            let cli = Cli::try_parse_from(normalize_args(os(&v))).unwrap();
            let Command::Verify(a) = cli.command else {
                panic!()
            };
            assert!(load_scenario(&a).is_err(), "{extra:?}");
        }
    }
}
