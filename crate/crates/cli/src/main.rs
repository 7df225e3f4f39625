//! `fusionbed` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input (scenario, replay
//! file, report schema or usage), 3 runtime pipeline error.

mod artifacts;
mod compare;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fusionbed::scenario::{self, bundled, load_scenario, parse_replay, LogLevel, Mode, RunOptions, Scenario};

#[derive(Parser, Debug)]
#[command(name = "fusionbed", version, about = "Deterministic multi-agent camera-radar fusion testbed")]
struct Cli {
    /// Log threshold for run.log; overrides FUSION_LOG_LEVEL.
    #[arg(long, global = true)]
    log_level: Option<LogLevel>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a scenario and print its normalized form.
    Validate {
        #[command(flatten)]
        source: ScenarioSource,
    },
    /// Run a scenario and write report.json, tracks.jsonl, metrics.csv, run.log and replay.jsonl.
    Run {
        #[command(flatten)]
        source: ScenarioSource,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drive the pipeline from a recorded JSONL file.
    Replay {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge report.json files into compare.csv and print metric deltas against the first.
    Compare {
        #[arg(long)]
        out: PathBuf,
        runs: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct ScenarioSource {
    /// Scenario JSON file.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Scenario shipped with the tool: urban, occlusion or edge.
    #[arg(long, value_name = "NAME")]
    bundled: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Invalid(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load(source: &ScenarioSource) -> Result<Scenario, CliError> {
    let text = match (&source.scenario, &source.bundled) {
        (Some(path), _) => read_text(path)?,
        (None, Some(name)) => bundled(name)
            .ok_or_else(|| CliError::Invalid(format!("no bundled scenario named {name:?}")))?
            .to_string(),
        (None, None) => unreachable!("clap enforces one source"),
    };
    load_scenario(&text).map_err(|e| CliError::Invalid(e.to_string()))
}

fn options(level: Option<LogLevel>) -> RunOptions {
    RunOptions {
        log_level: level.unwrap_or_else(LogLevel::from_env),
        ..RunOptions::default()
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let opts = options(cli.log_level);
    match cli.command {
        Command::Validate { source } => {
            let s = load(&source)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("scenario serializes"));
        }
        Command::Run { source, mode, seed, out } => {
            let s = load(&source)?
                .with_overrides(mode, seed)
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            let output = scenario::run_scenario(&s, opts).map_err(|e| CliError::Runtime(e.to_string()))?;
            artifacts::write_all(&out, &output)?;
            println!("{}", output.report.summary());
        }
        Command::Replay { input, mode, out } => {
            let text = read_text(&input)?;
            let invalid = |e: scenario::replay::ReplayError| CliError::Invalid(format!("{}: {e}", input.display()));
            let plan = parse_replay(&text).map_err(invalid)?.into_plan(mode).map_err(invalid)?;
            let output = scenario::run(&plan.scenario, plan.source, plan.truth, opts)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            artifacts::write_all(&out, &output)?;
            println!("{}", output.report.summary());
        }
        Command::Compare { out, runs } => {
            let table = compare::compare(&out, &runs)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fusionbed: {e}");
            ExitCode::from(e.code())
        }
    }
}
