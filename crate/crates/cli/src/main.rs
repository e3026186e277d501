use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wncs_cli::bler_table::load_bler_table;
use wncs_cli::config::parse_config;
use wncs_cli::sweep::{derive_seeds, run_sweep, SweepError, SweepSpec, DEFAULT_REPLICATIONS};
use wncs_core::link_adaptation::default_catalogue;
use wncs_core::scheduler::PolicyKind;
use wncs_core::simulator::SimConfig;

/// Sweep arrival rates, scheduling policies and seeds; write summary.csv,
/// an optional trace.csv and a run manifest.
///
/// Exit status: 0 on success, 1 for invalid input, 2 when a run or the
/// output fails.
#[derive(Debug, Parser)]
#[command(name = "wncs", version)]
struct Args {
    /// Config file of `key = value` lines; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policies to run, comma separated [default: all three].
    #[arg(long, value_delimiter = ',', value_parser = parse_policy)]
    policy: Vec<PolicyKind>,
    /// Arrival rates per tick, comma separated [default: the config's].
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    /// Seeds, comma separated [default: five derived from the config seed].
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Ticks per run; overrides the config.
    #[arg(long)]
    steps: Option<u64>,
    /// BLER table CSV [default: the built-in table].
    #[arg(long)]
    bler_table: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write per-tick records to trace.csv.
    #[arg(long)]
    trace: bool,
    /// Worker threads [default: one per core].
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse().map_err(|e: wncs_core::Error| e.to_string())
}

const VALIDATION: u8 = 1;
const RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(VALIDATION) } else { ExitCode::SUCCESS };
        }
    };
    match sweep(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

fn sweep(args: Args) -> Result<(), (u8, String)> {
    let invalid = |e: &dyn std::fmt::Display| (VALIDATION, e.to_string());
    let mut base = match &args.config {
        Some(path) => parse_config(path).map_err(|e| invalid(&e))?,
        None => SimConfig::default(),
    };
    if let Some(steps) = args.steps {
        base.total_ticks = steps;
        base.validate().map_err(|e| invalid(&e))?;
    }
    let (catalogue, table_source) = match &args.bler_table {
        Some(path) => (
            load_bler_table(path).map_err(|e| invalid(&format!("{}: {e}", path.display())))?,
            path.display().to_string(),
        ),
        None => (default_catalogue(), "builtin".to_string()),
    };
    let spec = SweepSpec {
        lambdas: if args.lambda.is_empty() { vec![base.arrival_rate] } else { args.lambda },
        policies: if args.policy.is_empty() { PolicyKind::ALL.to_vec() } else { args.policy },
        seeds: if args.seeds.is_empty() { derive_seeds(base.seed, DEFAULT_REPLICATIONS) } else { args.seeds },
        out_dir: args.out,
        trace: args.trace,
        jobs: args.jobs,
        table_source,
    };
    let outcome = run_sweep(&spec, &base, &catalogue).map_err(|e| match e {
        SweepError::Invalid(_) | SweepError::OutputDir { .. } => invalid(&e),
        SweepError::Io { .. } => (RUNTIME, e.to_string()),
    })?;
    for f in &outcome.failures {
        eprintln!("run λ = {}, policy = {}, seed = {} failed: {}", f.lambda, f.policy, f.seed, f.message);
    }
    eprintln!(
        "{} of {} runs written to {}",
        outcome.results.len(),
        outcome.results.len() + outcome.failures.len(),
        spec.out_dir.display()
    );
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err((RUNTIME, format!("{} run(s) failed", outcome.failures.len())))
    }
}
