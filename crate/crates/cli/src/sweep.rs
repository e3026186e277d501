//! λ × policy × seed sweeps with CSV output.
//!
//! Each cell is one [`wncs_core::simulator::run`] with the base config's
//! arrival rate, policy and seed replaced. Seeds are used as given, so every
//! λ and policy sees the same random streams for a given seed. When no seed
//! list is supplied, [`derive_seeds`] expands the config's master seed.
//!
//! Output directory layout:
//!
//! * `summary.csv`: one row per successful cell, sorted by λ, policy name
//!   and seed;
//! * `trace.csv`: per-tick records, same ordering, only when requested;
//! * `manifest.txt`: the sweep axes, the BLER table source, every config
//!   value and any failed cells.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use wncs_core::link_adaptation::Catalogue;
use wncs_core::scheduler::PolicyKind;
use wncs_core::simulator::{run, RunSummary, SimConfig};

use crate::config::render_config;

pub const SUMMARY_HEADER: [&str; 9] =
    ["lambda", "policy", "seed", "mean_ru_pct", "arrived", "successful", "unstable", "unstable_pct", "fallback_count"];

pub const TRACE_HEADER: [&str; 13] = [
    "lambda",
    "policy",
    "seed",
    "tick",
    "active",
    "arrivals",
    "scheduled",
    "delivered",
    "rb_used",
    "ru_pct",
    "fallbacks",
    "became_unstable",
    "became_successful",
];

/// Number of replications when no seed list is given.
pub const DEFAULT_REPLICATIONS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub trace: bool,
    /// Worker threads; `None` lets rayon decide.
    pub jobs: Option<usize>,
    /// Where the BLER table came from, for the manifest.
    pub table_source: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error("output directory {path} is not writable: {source}")]
    OutputDir { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> SweepError + '_ {
    move |source| SweepError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub lambda: f64,
    pub policy: PolicyKind,
    pub seed: u64,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub lambda: f64,
    pub policy: PolicyKind,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepOutcome {
    pub results: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
}

/// SplitMix64 outputs `1..=n` of the sequence started at `master`.
pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut state = master;
    (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        })
        .collect()
}

fn cell_config(base: &SimConfig, lambda: f64, policy: PolicyKind, seed: u64, trace: bool) -> SimConfig {
    SimConfig { arrival_rate: lambda, policy, seed, record_trace: trace, ..base.clone() }
}

fn sort_key(lambda: f64, policy: PolicyKind, seed: u64) -> (u64, &'static str, u64) {
    // λ is validated positive, so the bit pattern orders like the value
    (lambda.to_bits(), policy.as_str(), seed)
}

impl SweepSpec {
    /// Checks the axes and every cell's config before anything runs.
    pub fn validate(&self, base: &SimConfig) -> Result<(), SweepError> {
        let fail = |m: String| Err(SweepError::Invalid(m));
        if self.lambdas.is_empty() {
            return fail("λ list is empty".into());
        }
        if self.policies.is_empty() {
            return fail("policy list is empty".into());
        }
        if self.seeds.is_empty() {
            return fail("seed list is empty".into());
        }
        if self.jobs == Some(0) {
            return fail("jobs must be at least 1".into());
        }
        for (name, n) in [
            ("λ", dup_count(&self.lambdas, |x| x.to_bits())),
            ("policy", dup_count(&self.policies, |p| *p)),
            ("seed", dup_count(&self.seeds, |s| *s)),
        ] {
            if n > 0 {
                return fail(format!("{name} list contains duplicates"));
            }
        }
        for &lambda in &self.lambdas {
            cell_config(base, lambda, self.policies[0], self.seeds[0], false)
                .validate()
                .map_err(|e| SweepError::Invalid(format!("λ = {lambda}: {e}")))?;
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(f64, PolicyKind, u64)> {
        let mut cells = Vec::with_capacity(self.lambdas.len() * self.policies.len() * self.seeds.len());
        for &l in &self.lambdas {
            for &p in &self.policies {
                for &s in &self.seeds {
                    cells.push((l, p, s));
                }
            }
        }
        cells.sort_by_key(|&(l, p, s)| sort_key(l, p, s));
        cells
    }
}

fn dup_count<T, K: Ord>(items: &[T], key: impl Fn(&T) -> K) -> usize {
    let mut keys: Vec<K> = items.iter().map(key).collect();
    keys.sort();
    let n = keys.len();
    keys.dedup();
    n - keys.len()
}

fn run_cell(
    base: &SimConfig,
    catalogue: &Catalogue,
    cell: (f64, PolicyKind, u64),
    trace: bool,
) -> Result<CellResult, CellFailure> {
    let (lambda, policy, seed) = cell;
    let cfg = cell_config(base, lambda, policy, seed, trace);
    let failure = |message: String| CellFailure { lambda, policy, seed, message };
    match catch_unwind(AssertUnwindSafe(|| run(&cfg, catalogue))) {
        Ok(Ok(summary)) => Ok(CellResult { lambda, policy, seed, summary }),
        Ok(Err(e)) => Err(failure(e.to_string())),
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Err(failure(format!("panicked: {message}")))
        }
    }
}

/// Runs every cell; failed cells are collected, not fatal. Results come back
/// in output order.
pub fn execute(spec: &SweepSpec, base: &SimConfig, catalogue: &Catalogue) -> Result<SweepOutcome, SweepError> {
    spec.validate(base)?;
    let cells = spec.cells();
    let work = || -> Vec<Result<CellResult, CellFailure>> {
        cells.par_iter().map(|&c| run_cell(base, catalogue, c, spec.trace)).collect()
    };
    let results = match spec.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SweepError::Invalid(e.to_string()))?
            .install(work),
        None => work(),
    };
    let mut outcome = SweepOutcome::default();
    for r in results {
        match r {
            Ok(c) => outcome.results.push(c),
            Err(f) => outcome.failures.push(f),
        }
    }
    Ok(outcome)
}

pub fn write_summary<W: Write>(results: &[CellResult], writer: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(SUMMARY_HEADER)?;
    for c in results {
        let s = &c.summary;
        out.write_record([
            c.lambda.to_string(),
            c.policy.to_string(),
            c.seed.to_string(),
            s.mean_ru_pct().to_string(),
            s.arrived.to_string(),
            s.successful.to_string(),
            s.unstable.to_string(),
            s.unstable_pct().to_string(),
            s.fallback_count.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(results: &[CellResult], writer: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(TRACE_HEADER)?;
    for c in results {
        let (l, p, s) = (c.lambda.to_string(), c.policy.to_string(), c.seed.to_string());
        for t in &c.summary.trace {
            out.write_record([
                l.clone(),
                p.clone(),
                s.clone(),
                t.tick.to_string(),
                t.active.to_string(),
                t.arrivals.to_string(),
                t.scheduled.to_string(),
                t.delivered.to_string(),
                t.rb_used.to_string(),
                t.ru_pct.to_string(),
                t.fallbacks.to_string(),
                t.became_unstable.to_string(),
                t.became_successful.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn render_manifest(spec: &SweepSpec, base: &SimConfig, failures: &[CellFailure]) -> String {
    let join = |v: Vec<String>| v.join(",");
    let mut m = String::new();
    let _ = writeln!(m, "# wncs {} run manifest", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "# sweep");
    let _ = writeln!(m, "lambdas = {}", join(spec.lambdas.iter().map(|l| l.to_string()).collect()));
    let _ = writeln!(m, "policies = {}", join(spec.policies.iter().map(|p| p.to_string()).collect()));
    let _ = writeln!(m, "seeds = {}", join(spec.seeds.iter().map(|s| s.to_string()).collect()));
    let _ = writeln!(m, "trace = {}", spec.trace);
    let _ = writeln!(m, "bler_table = {}", spec.table_source);
    let _ = writeln!(m, "# base config (arrival_rate, policy and seed are replaced per cell)");
    m.push_str(&render_config(base));
    let _ = writeln!(m, "# failed cells: {}", failures.len());
    for f in failures {
        let _ = writeln!(m, "failed = {},{},{}: {}", f.lambda, f.policy, f.seed, f.message);
    }
    m
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, SweepError> {
    fs::File::create(path).map(BufWriter::new).map_err(io_error(path))
}

fn csv_io(path: &Path) -> impl FnOnce(csv::Error) -> SweepError + '_ {
    move |e| SweepError::Io { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) }
}

/// Runs the sweep and writes its files into `spec.out_dir`.
pub fn run_sweep(spec: &SweepSpec, base: &SimConfig, catalogue: &Catalogue) -> Result<SweepOutcome, SweepError> {
    spec.validate(base)?;
    // fail on an unwritable directory before spending time on the runs
    let manifest_path = spec.out_dir.join("manifest.txt");
    fs::create_dir_all(&spec.out_dir)
        .and_then(|()| fs::write(&manifest_path, render_manifest(spec, base, &[])))
        .map_err(|source| SweepError::OutputDir { path: spec.out_dir.clone(), source })?;

    let outcome = execute(spec, base, catalogue)?;

    let summary_path = spec.out_dir.join("summary.csv");
    write_summary(&outcome.results, create(&summary_path)?).map_err(csv_io(&summary_path))?;
    if spec.trace {
        let trace_path = spec.out_dir.join("trace.csv");
        write_trace(&outcome.results, create(&trace_path)?).map_err(csv_io(&trace_path))?;
    }
    fs::write(&manifest_path, render_manifest(spec, base, &outcome.failures)).map_err(io_error(&manifest_path))?;
    Ok(outcome)
}
