//! Batch command-line runner for the consensus simulator.
//!
//! Subcommands: `run` (one seeded simulation), `attack` (canned deterministic
//! attack schedules or a custom script), `sweep` (parameter grid with a
//! tabular summary), `constants` (derived analysis constants for a parameter
//! set), and `check-trace` (re-verify a stored trace file).
//!
//! Exit codes: 0 — completed without hard violations; 1 — a model violation
//! was detected (or a sweep cell failed); 2 — configuration, script, or I/O
//! errors.

mod check;
mod config;
mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::Overrides;
use taiji_core::adversary::attacks::{ahh_params, hah_params, PERIOD};
use taiji_core::adversary::script::Script;
use taiji_core::params::derive_constants;
use taiji_core::simulator::report::RunReport;
use taiji_core::simulator::trace::read_trace;
use taiji_core::{
    run, FileSink, NullSink, SimConfig, SimError, StrategyName, StrategySpec, TraceSink, Verdict,
};

#[derive(Parser)]
#[command(
    name = "taiji",
    version,
    about = "Round-based simulator for a hybrid longest-chain/BFT proof-of-work protocol"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one seeded simulation and summarize it
    Run(RunArgs),
    /// Run a canned deterministic attack schedule, or a custom script
    Attack(AttackArgs),
    /// Run a parameter grid and tabulate per-cell results
    Sweep(SweepArgs),
    /// Print the derived analysis constants for a parameter set
    Constants(ConstantsArgs),
    /// Re-verify the invariants a stored trace file can witness
    CheckTrace(CheckTraceArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file (falls back to $TAIJI_CONFIG)
    #[arg(long, env = "TAIJI_CONFIG")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    /// Write the JSONL event trace here
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write the JSON report here
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// Print the report as a CSV header + row instead of the summary
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct AttackArgs {
    /// hah_displace, ahh_balance, or custom_script
    #[arg(long)]
    strategy: String,
    /// Number of 48-round schedule repetitions (canned attacks only)
    #[arg(long, default_value_t = 6)]
    periods: u32,
    /// Script JSON file (custom_script only)
    #[arg(long)]
    script: Option<PathBuf>,
    /// Base JSON config for custom scripts (falls back to $TAIJI_CONFIG)
    #[arg(long, env = "TAIJI_CONFIG")]
    config: Option<PathBuf>,
    /// RNG seed (only id assignment draws from it under a script)
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSONL event trace here
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write the JSON report here
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// Print the report as a CSV header + row instead of the summary
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep JSON config (falls back to $TAIJI_CONFIG)
    #[arg(long, env = "TAIJI_CONFIG")]
    config: PathBuf,
    /// Write one CSV row per run here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConstantsArgs {
    /// JSON config file (falls back to $TAIJI_CONFIG)
    #[arg(long, env = "TAIJI_CONFIG")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct CheckTraceArgs {
    /// Trace file (JSONL) to audit
    path: PathBuf,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Attack(args) => cmd_attack(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Constants(args) => cmd_constants(args),
        Cmd::CheckTrace(args) => cmd_check_trace(args),
    }
}

/// A finished simulation, or the violation a strict run aborted on.
enum Outcome {
    Report(Box<RunReport>),
    Violation(String),
}

fn execute(sim: &SimConfig, trace_out: Option<&Path>) -> Result<Outcome> {
    let result = match trace_out {
        Some(path) => {
            let mut sink = FileSink::create(path)
                .with_context(|| format!("cannot create trace file {}", path.display()))?;
            run(sim, &mut sink)
        }
        None => run(sim, &mut NullSink),
    };
    match result {
        Ok(report) => Ok(Outcome::Report(Box::new(report))),
        Err(SimError::ModelViolation(msg)) => Ok(Outcome::Violation(msg)),
        Err(SimError::Adversary(e)) => Ok(Outcome::Violation(e.to_string())),
        Err(SimError::Config(msg)) => bail!("configuration rejected: {msg}"),
        Err(SimError::Io(e)) => Err(e).context("trace output failed"),
    }
}

/// Prints/writes the report and maps the verdict to an exit code.
fn finish_run(report: &RunReport, report_out: Option<&Path>, csv: bool) -> Result<ExitCode> {
    if let Some(path) = report_out {
        let json = serde_json::to_string_pretty(report)?;
        std::fs::write(path, json)
            .with_context(|| format!("cannot write report to {}", path.display()))?;
    }
    if csv {
        println!("{}", RunReport::csv_header());
        println!("{}", report.csv_row());
    } else {
        print!("{}", render::render_report(report));
    }
    Ok(match report.verdict {
        Verdict::Fail => ExitCode::from(1),
        _ => ExitCode::SUCCESS,
    })
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let mut sim = config::load_sim_config(args.config.as_deref())?;
    args.overrides.apply(&mut sim)?;
    config::vet_params(&sim)?;
    match execute(&sim, args.trace_out.as_deref())? {
        Outcome::Report(report) => finish_run(&report, args.report_out.as_deref(), args.csv),
        Outcome::Violation(msg) => {
            eprintln!("model violation: {msg}");
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_attack(args: AttackArgs) -> Result<ExitCode> {
    let name: StrategyName = args
        .strategy
        .parse()
        .map_err(|e: String| anyhow::anyhow!("--strategy: {e}"))?;
    let sim = match name {
        StrategyName::HahDisplace | StrategyName::AhhBalance => {
            if args.periods == 0 {
                bail!("--periods must be at least 1");
            }
            let mut params = if name == StrategyName::HahDisplace {
                hah_params()
            } else {
                ahh_params()
            };
            params.r_max = u64::from(args.periods) * PERIOD;
            SimConfig {
                params,
                strategy: StrategySpec::named(name),
                seed: args.seed.unwrap_or(1),
                ..SimConfig::default()
            }
        }
        StrategyName::CustomScript => {
            let Some(script_path) = args.script.as_deref() else {
                bail!("custom_script needs --script FILE");
            };
            let text = std::fs::read_to_string(script_path)
                .with_context(|| format!("cannot read script {}", script_path.display()))?;
            let script: Script = serde_json::from_str(&text)
                .with_context(|| format!("script {} does not parse", script_path.display()))?;
            let mut sim = config::load_sim_config(args.config.as_deref())?;
            script
                .validate(&sim.params)
                .map_err(|e| anyhow::anyhow!("script rejected: {e}"))?;
            sim.strategy = StrategySpec {
                name: StrategyName::CustomScript,
                script: Some(script),
            };
            if let Some(seed) = args.seed {
                sim.seed = seed;
            }
            sim
        }
        other => bail!(
            "`taiji attack` runs scripted schedules; use `taiji run --strategy {}` instead",
            other.as_str()
        ),
    };
    config::vet_params(&sim)?;
    match execute(&sim, args.trace_out.as_deref())? {
        Outcome::Report(report) => finish_run(&report, args.report_out.as_deref(), args.csv),
        Outcome::Violation(msg) => {
            eprintln!("model violation: {msg}");
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let sweep = config::load_sweep_config(&args.config)?;
    let base = &sweep.base;
    let ms = sweep.m.clone().unwrap_or_else(|| vec![base.params.m]);
    let betas = sweep.beta.clone().unwrap_or_else(|| vec![base.params.beta]);
    let strategies = sweep
        .strategies
        .clone()
        .unwrap_or_else(|| vec![base.strategy.name]);

    let mut cells = Vec::new();
    for &m in &ms {
        for &beta in &betas {
            for &strategy in &strategies {
                cells.push((m, beta, strategy));
            }
        }
    }
    let mut jobs = Vec::new();
    for (idx, &(m, beta, strategy)) in cells.iter().enumerate() {
        for seed in sweep.seed_start..sweep.seed_start + sweep.seeds {
            let mut sim = base.clone();
            sim.params.m = m;
            sim.params.beta = beta;
            sim.strategy = StrategySpec::named(strategy);
            sim.seed = seed;
            config::vet_params(&sim)?;
            jobs.push((idx, sim));
        }
    }

    // cells are independent; run the whole grid work-stealing parallel
    let results: Vec<(usize, Result<RunReport, String>)> = jobs
        .par_iter()
        .map(|(idx, sim)| {
            let result = run(sim, &mut NullSink).map_err(|e| e.to_string());
            (*idx, result)
        })
        .collect();

    let mut csv = args
        .out
        .as_deref()
        .map(|path| -> Result<_> {
            Ok((
                std::io::BufWriter::new(std::fs::File::create(path).with_context(|| {
                    format!("cannot create sweep output {}", path.display())
                })?),
                path,
            ))
        })
        .transpose()?;
    if let Some((file, _)) = csv.as_mut() {
        use std::io::Write;
        writeln!(file, "{}", RunReport::csv_header())?;
    }

    #[derive(Default)]
    struct Cell {
        runs: u64,
        fails: u64,
        flagged: u64,
        errors: u64,
        violations: u64,
        confirmed: u64,
        censored: u64,
        mean_weighted: f64,
        p95_weighted: f64,
    }
    let mut agg: Vec<Cell> = (0..cells.len()).map(|_| Cell::default()).collect();
    for (idx, result) in &results {
        let cell = &mut agg[*idx];
        cell.runs += 1;
        match result {
            Ok(report) => {
                cell.fails += u64::from(report.verdict == Verdict::Fail);
                cell.flagged += u64::from(report.verdict == Verdict::Flagged);
                cell.violations += report.violations.total();
                let l = &report.latency;
                cell.confirmed += l.confirmed;
                cell.censored += l.censored;
                cell.mean_weighted += l.mean.unwrap_or(0.0) * l.confirmed as f64;
                cell.p95_weighted += l.p95.unwrap_or(0) as f64 * l.confirmed as f64;
                if let Some((file, _)) = csv.as_mut() {
                    use std::io::Write;
                    writeln!(file, "{}", report.csv_row())?;
                }
            }
            Err(msg) => {
                cell.errors += 1;
                eprintln!(
                    "cell (m={}, beta={}, {}): {msg}",
                    cells[*idx].0,
                    cells[*idx].1,
                    cells[*idx].2.as_str()
                );
            }
        }
    }
    if let Some((file, path)) = csv.as_mut() {
        use std::io::Write;
        file.flush()?;
        eprintln!("wrote {} rows to {}", results.len(), path.display());
    }

    println!(
        "{:>5} {:>6} {:>15} {:>5} {:>5} {:>5} {:>5} {:>6} {:>9} {:>9} {:>9}",
        "m", "beta", "strategy", "runs", "fail", "flag", "err", "viol", "mean", "p95~", "censored"
    );
    let mut bad = false;
    for (i, cell) in agg.iter().enumerate() {
        let (m, beta, strategy) = cells[i];
        bad |= cell.violations > 0 || cell.errors > 0 || cell.fails > 0;
        let mean = if cell.confirmed > 0 {
            format!("{:.1}", cell.mean_weighted / cell.confirmed as f64)
        } else {
            "-".into()
        };
        let p95 = if cell.confirmed > 0 {
            format!("{:.1}", cell.p95_weighted / cell.confirmed as f64)
        } else {
            "-".into()
        };
        println!(
            "{:>5} {:>6} {:>15} {:>5} {:>5} {:>5} {:>5} {:>6} {:>9} {:>9} {:>9}",
            m,
            beta,
            strategy.as_str(),
            cell.runs,
            cell.fails,
            cell.flagged,
            cell.errors,
            cell.violations,
            mean,
            p95,
            cell.censored,
        );
    }
    Ok(if bad { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_constants(args: ConstantsArgs) -> Result<ExitCode> {
    let mut sim = config::load_sim_config(args.config.as_deref())?;
    args.overrides.apply(&mut sim)?;
    config::vet_params(&sim)?;
    let constants = derive_constants(&sim.params)
        .map_err(|e| anyhow::anyhow!("cannot derive constants: {e}"))?;
    print!("{}", render::render_constants(&sim.params, &constants));
    Ok(ExitCode::SUCCESS)
}

fn cmd_check_trace(args: CheckTraceArgs) -> Result<ExitCode> {
    let events = read_trace(&args.path)
        .with_context(|| format!("cannot read trace {}", args.path.display()))?;
    let checks = check::audit(&events)?;
    let all_ok = check::print_results(&checks);
    println!(
        "{}: {} events, {} checks, {}",
        args.path.display(),
        events.len(),
        checks.len(),
        if all_ok { "all PASS" } else { "FAILURES" }
    );
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
