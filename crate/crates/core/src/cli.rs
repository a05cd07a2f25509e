//! The `smra` command line: run scenarios, query the oracle, analyze
//! valuations and replay traces.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 welfare oracle
//! over budget, 4 internal invariant violation.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::mechanism::{read_trace_jsonl, replay_trace, write_trace_jsonl};
use crate::oracle::optimal_welfare;
use crate::scenario::{
    build_builtin, parse_partition, run_trials, BuiltinParams, Scenario, TrialOptions, BUILTIN_NAMES,
};
use crate::strategy::{LocalStart, SecureVariant};
use crate::valuation::{degree_of_submodularity, Valuation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ORACLE_BUDGET: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::OracleTooLarge { .. } => EXIT_ORACLE_BUDGET,
        Error::Internal(_) => EXIT_INTERNAL,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "smra", version, about = "Simultaneous multiple-round auction simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run Monte Carlo trials of a scenario and print a JSON summary.
    Run(RunArgs),
    /// Print the optimal welfare and an optimal assignment.
    Oracle(SourceArgs),
    /// Print the degree of submodularity of a valuation (inline JSON or a file).
    Analyze {
        #[arg(value_name = "SPEC")]
        spec: String,
    },
    /// Re-apply a JSONL trace and print the final state.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Built-in scenario name.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario", value_parser = clap::builder::PossibleValuesParser::new(BUILTIN_NAMES))]
    pub builtin: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long = "M")]
    pub big_m: Option<i64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<i64>,
    #[arg(long = "H")]
    pub h: Option<i64>,
    #[arg(long = "L")]
    pub l: Option<usize>,
    /// Parts for `scripted_partition`, e.g. `0,1;2`.
    #[arg(long)]
    pub partition: Option<String>,
    /// Local-search starting point for locally optimal bidders.
    #[arg(long, value_parser = ["previous", "empty"])]
    pub local_start: Option<String>,
    /// Prices used by the security check of secure bidders.
    #[arg(long, value_parser = ["incremented", "plain"])]
    pub secure_variant: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write the round trace of trial 0 as JSONL.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write one CSV row per trial.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the summary JSON to a file.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
}

impl SourceArgs {
    pub fn load(&self) -> Result<Scenario> {
        let mut scenario = match (&self.builtin, &self.scenario) {
            (Some(name), None) => {
                let partition = self.partition.as_deref().map(parse_partition).transpose()?;
                build_builtin(
                    name,
                    &BuiltinParams {
                        big_m: self.big_m,
                        k: self.k,
                        n: self.n,
                        alpha: self.alpha,
                        h: self.h,
                        l: self.l,
                        partition,
                    },
                )?
            }
            (None, Some(path)) => Scenario::from_json(&read_text(path)?)?,
            _ => {
                return Err(Error::InvalidArgument(
                    "give exactly one of --builtin and --scenario".into(),
                ))
            }
        };
        if let Some(start) = &self.local_start {
            scenario.set_local_start(match start.as_str() {
                "empty" => LocalStart::Empty,
                _ => LocalStart::Previous,
            });
        }
        if let Some(variant) = &self.secure_variant {
            scenario.set_secure_variant(match variant.as_str() {
                "plain" => SecureVariant::Plain,
                _ => SecureVariant::Incremented,
            });
        }
        Ok(scenario)
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", path.display())))
}

fn print_json(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = args.source.load()?;
    let opts = TrialOptions {
        jobs: args.jobs,
        max_rounds: args.max_rounds,
        capture_trace: args.trace.is_some(),
    };
    let stats = run_trials(&scenario, args.trials, args.seed, &opts)?;
    if let Some(path) = &args.out {
        let mut f = create(path)?;
        stats.write_csv(&mut f)?;
        f.flush()?;
    }
    if let (Some(path), Some(trace)) = (&args.trace, &stats.trace) {
        let mut f = create(path)?;
        write_trace_jsonl(trace, &mut f)?;
        f.flush()?;
    }
    let summary = stats.summary();
    if let Some(path) = &args.summary {
        let mut f = create(path)?;
        print_json(&mut f, &summary)?;
        f.flush()?;
    }
    print_json(out, &summary)
}

fn cmd_oracle(args: &SourceArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = args.load()?;
    let opt = optimal_welfare(&scenario.valuations())?;
    print_json(
        out,
        &json!({
            "scenario": scenario.name,
            "optimal": opt.welfare,
            "assignment": opt.assignment,
        }),
    )
}

fn cmd_analyze(spec: &str, out: &mut dyn Write) -> Result<()> {
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        read_text(Path::new(spec))?
    };
    let v: Valuation = serde_json::from_str(&text)?;
    let report = degree_of_submodularity(&v)?;
    print_json(out, &serde_json::to_value(report)?)
}

fn cmd_replay(path: &Path, out: &mut dyn Write) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    let trace = read_trace_jsonl(BufReader::new(file))?;
    let state = replay_trace(&trace)?;
    print_json(
        out,
        &json!({
            "rounds": state.round(),
            "prices": state.prices(),
            "allocation": state.provisional(),
        }),
    )
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Run(args) => cmd_run(args, out),
        Command::Oracle(args) => cmd_oracle(args, out),
        Command::Analyze { spec } => cmd_analyze(spec, out),
        Command::Replay { trace } => cmd_replay(trace, out),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Results go to `out`, diagnostics to `err`.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
