//! hmemsim: trace-driven hybrid DRAM/NVM memory system simulator.
//!
//! Exit codes: 0 success, 1 usage/config/trace errors, 2 internal
//! invariant faults.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use hmemsim_core::sim::{run_records, run_synthetic, SimError};
use hmemsim_core::trace::{parse_trace_file, validate_trace, SyntheticSpec};
use hmemsim_core::SimConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Parser)]
#[command(
    name = "hmemsim",
    about = "Deterministic simulator of a hybrid DRAM/NVM memory system",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and emit a JSON report.
    Run {
        /// Config file (`key = value` lines); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trace file to replay.
        #[arg(long, conflicts_with = "synthetic")]
        trace: Option<PathBuf>,
        /// Synthetic workload spec file to generate from.
        #[arg(long)]
        synthetic: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Require the energy section (fails if coefficients are missing).
        #[arg(long)]
        energy: bool,
    },
    /// Check a trace file against the format and window invariants.
    Validate {
        #[arg(long)]
        trace: PathBuf,
        /// Config supplying the window bounds; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a batch of simulations from a plan file.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        /// Parallel worker count.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let fault = err
                .downcast_ref::<SimError>()
                .is_some_and(|e| matches!(e, SimError::Fault(_)));
            ExitCode::from(if fault { 2 } else { 1 })
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, trace, synthetic, seed, report, energy } => {
            let json = run_one(
                config.as_deref(),
                trace.as_deref(),
                synthetic.as_deref(),
                seed,
                energy,
            )?;
            match report {
                Some(path) => {
                    std::fs::write(&path, json)
                        .with_context(|| format!("cannot write report to {}", path.display()))?;
                }
                None => print!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { trace, config } => {
            let cfg = load_config(config.as_deref())?;
            let text = std::fs::read_to_string(&trace)
                .with_context(|| format!("cannot read trace {}", trace.display()))?;
            let issues = validate_trace(&text, &cfg);
            if issues.is_empty() {
                println!("ok");
                Ok(ExitCode::SUCCESS)
            } else {
                for issue in &issues {
                    println!("{issue}");
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::Sweep { plan, jobs } => run_sweep(&plan, jobs),
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig> {
    match path {
        Some(p) => SimConfig::from_file(p).with_context(|| format!("config {}", p.display())),
        None => Ok(SimConfig::default()),
    }
}

fn run_one(
    config: Option<&Path>,
    trace: Option<&Path>,
    synthetic: Option<&Path>,
    seed: Option<u64>,
    energy: bool,
) -> Result<String> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if energy && cfg.energy.is_none() {
        bail!(
            "energy reporting requested but no coefficients configured; \
             set the four energy.*.{{read,write}}_nj_per_byte keys"
        );
    }
    let output = match (trace, synthetic) {
        (Some(trace), None) => {
            let records = parse_trace_file(trace, &cfg)
                .with_context(|| format!("trace {}", trace.display()))?;
            run_records(&cfg, records, false)?
        }
        (None, Some(spec_path)) => {
            let spec = SyntheticSpec::from_file(spec_path)
                .with_context(|| format!("synthetic spec {}", spec_path.display()))?;
            run_synthetic(&cfg, &spec, false)?
        }
        _ => bail!("exactly one of --trace or --synthetic is required"),
    };
    Ok(output.report.to_json())
}

struct PlanEntry {
    name: String,
    config: Option<PathBuf>,
    trace: Option<PathBuf>,
    synthetic: Option<PathBuf>,
    seed: Option<u64>,
    report: PathBuf,
}

fn parse_plan(path: &Path) -> Result<Vec<PlanEntry>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read plan {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |s: &str| -> PathBuf {
        let p = PathBuf::from(s);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let mut name = format!("run-{}", entries.len() + 1);
        let mut config = None;
        let mut trace = None;
        let mut synthetic = None;
        let mut seed = None;
        let mut report = None;
        for token in line.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| anyhow!("plan line {lineno}: expected key=value, got `{token}`"))?;
            match key {
                "name" => name = value.to_string(),
                "config" => config = Some(resolve(value)),
                "trace" => trace = Some(resolve(value)),
                "synthetic" => synthetic = Some(resolve(value)),
                "seed" => {
                    seed = Some(value.parse().map_err(|e| anyhow!("plan line {lineno}: seed: {e}"))?)
                }
                "report" => report = Some(resolve(value)),
                other => bail!("plan line {lineno}: unknown key `{other}`"),
            }
        }
        if trace.is_some() == synthetic.is_some() {
            bail!("plan line {lineno}: exactly one of trace= or synthetic= is required");
        }
        let report = report.ok_or_else(|| anyhow!("plan line {lineno}: report= is required"))?;
        entries.push(PlanEntry { name, config, trace, synthetic, seed, report });
    }
    Ok(entries)
}

fn run_sweep(plan: &Path, jobs: usize) -> Result<ExitCode> {
    let entries = parse_plan(plan)?;
    if entries.is_empty() {
        bail!("plan {} has no runs", plan.display());
    }
    let jobs = jobs.max(1).min(entries.len());
    let next = AtomicUsize::new(0);
    let failures: Mutex<Vec<bool>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(entry) = entries.get(i) else { break };
                let outcome = run_one(
                    entry.config.as_deref(),
                    entry.trace.as_deref(),
                    entry.synthetic.as_deref(),
                    entry.seed,
                    false,
                )
                .and_then(|json| {
                    std::fs::write(&entry.report, json).with_context(|| {
                        format!("cannot write report to {}", entry.report.display())
                    })
                });
                match outcome {
                    Ok(()) => println!("{}: ok ({})", entry.name, entry.report.display()),
                    Err(err) => {
                        let fault = err
                            .downcast_ref::<SimError>()
                            .is_some_and(|e| matches!(e, SimError::Fault(_)));
                        eprintln!("{}: error: {err:#}", entry.name);
                        failures.lock().unwrap().push(fault);
                    }
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    if failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else if failures.iter().any(|fault| *fault) {
        Ok(ExitCode::from(2))
    } else {
        Ok(ExitCode::from(1))
    }
}
