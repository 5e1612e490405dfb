//! `keyvote`: seeded voting benchmarks on synthetic scenes.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 every trial
//! degenerate, 4 self-test failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use keyvote::experiment::{run_experiment, run_sweep, ExperimentConfig};
use keyvote::report::{render_report, summarize, sweep_table, ReportFormat, ReportTable};
use keyvote::selftest::{oracle_equivalence, OBJECTIVE_SLACK, POSITION_TOLERANCE_M};
use keyvote::Error;

const THREADS_ENV: &str = "KEYVOTE_THREADS";

#[derive(Parser)]
#[command(name = "keyvote", version, about = "Closed-form keypoint voting benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its report.
    Run(ConfigArgs),
    /// Run the experiment once per level of `sweep.axis`.
    Sweep(ConfigArgs),
    /// Aggregate CSV reports produced by `run`.
    Summarize {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Compare closed-form voting against a brute-force optimizer.
    Selftest {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides such as `--trials=5` or `--scene.angular_noise_deg=2.5`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    AllDegenerate,
    SelfTest(usize),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Io(_) => 2,
            Failure::AllDegenerate => 3,
            Failure::SelfTest(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(root: &mut toml::Table, arg: &str) -> Result<(), Failure> {
    let body = arg
        .strip_prefix("--")
        .ok_or_else(|| Failure::Config(format!("override {arg:?} must look like --key=value")))?;
    let (key, raw) = body
        .split_once('=')
        .ok_or_else(|| Failure::Config(format!("override {arg:?} has no '='")))?;
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Failure::Config(format!("empty key in {arg:?}")))?;
    let mut table = root;
    for part in parts {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Failure::Config(format!("{part} is not a table in {arg:?}")))?;
    }
    table.insert(last.to_string(), override_value(raw));
    Ok(())
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let mut root: toml::Table = match &args.config {
        Some(path) => toml::from_str(&read(path)?)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        None => toml::Table::new(),
    };
    for arg in &args.overrides {
        apply_override(&mut root, arg)?;
    }
    let config: ExperimentConfig = toml::Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| Failure::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn run(args: &ConfigArgs) -> Result<(), Failure> {
    let config = load_config(args)?;
    let outcome = run_experiment(&config)?;
    let csv = render_report(&outcome, &config, ReportFormat::Csv)?;
    match &config.output.csv {
        Some(path) => write(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &config.output.structured {
        write(path, &render_report(&outcome, &config, ReportFormat::Structured)?)?;
    }
    eprint!("{}", summarize(&[ReportTable::from_outcome(&outcome)])?.to_table());
    if outcome.all_degenerate() {
        return Err(Failure::AllDegenerate);
    }
    Ok(())
}

fn sweep(args: &ConfigArgs) -> Result<(), Failure> {
    let config = load_config(args)?;
    let levels = run_sweep(&config)?;
    let table = sweep_table(config.sweep.axis, &levels)?;
    match &config.output.csv {
        Some(path) => write(path, &table)?,
        None => print!("{table}"),
    }
    if let Some(path) = &config.output.structured {
        let json = serde_json::to_string_pretty(&levels).expect("sweep is always serializable");
        write(path, &(json + "\n"))?;
    }
    if levels.iter().all(|l| l.outcome.all_degenerate()) {
        return Err(Failure::AllDegenerate);
    }
    Ok(())
}

fn summarize_files(files: &[PathBuf]) -> Result<(), Failure> {
    let tables = files
        .iter()
        .map(|f| {
            let text = read(f)?;
            ReportTable::parse_csv(&text).map_err(|e| Failure::Config(format!("{}: {e}", f.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&tables)?;
    print!("{}", summary.to_table());
    if summary.algorithms.iter().all(|a| a.failure_rate == 1.0) {
        return Err(Failure::AllDegenerate);
    }
    Ok(())
}

fn selftest(instances: usize, seed: u64) -> Result<(), Failure> {
    let checks = oracle_equivalence(instances, seed, keyvote::Exec::Parallel)?;
    let failed = checks.iter().filter(|c| !c.passed()).count();
    let worst_gap = checks.iter().map(|c| c.position_gap_m).fold(0.0, f64::max);
    let worst_excess = checks
        .iter()
        .map(|c| c.closed_form_objective - c.oracle_objective)
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "oracle equivalence: {}/{} passed (worst position gap {worst_gap:.3e} m, tolerance {POSITION_TOLERANCE_M:e}; worst objective excess {worst_excess:.3e}, slack {OBJECTIVE_SLACK:e})",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        return Err(Failure::SelfTest(failed));
    }
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Summarize { files } => summarize_files(files),
        Command::Selftest { instances, seed } => selftest(*instances, *seed),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("configuration error: {m}"),
                Failure::Io(m) => eprintln!("I/O error: {m}"),
                Failure::AllDegenerate => eprintln!("every trial was degenerate"),
                Failure::SelfTest(n) => eprintln!("{n} self-test instance(s) failed"),
            }
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_build_nested_tables() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "--trials=3").unwrap();
        apply_override(&mut t, "--scene.angular_noise_deg=2.5").unwrap();
        apply_override(&mut t, "--output.csv=out.csv").unwrap();
        apply_override(&mut t, "--algorithms=[\"wvwv\"]").unwrap();
        let c: ExperimentConfig = toml::Value::Table(t).try_into().unwrap();
        assert_eq!(c.trials, 3);
        assert_eq!(c.scene.angular_noise_deg, 2.5);
        assert_eq!(c.output.csv, Some(PathBuf::from("out.csv")));
        assert_eq!(c.algorithms, vec![keyvote::Algorithm::Wvwv]);
    }

    #[test]
    fn malformed_overrides_are_config_errors() {
        let mut t = toml::Table::new();
        assert!(matches!(apply_override(&mut t, "trials=3"), Err(Failure::Config(_))));
        assert!(matches!(apply_override(&mut t, "--trials"), Err(Failure::Config(_))));
        apply_override(&mut t, "--trials=3").unwrap();
        assert!(matches!(apply_override(&mut t, "--trials.x=1"), Err(Failure::Config(_))));
    }
}
