//! `qecsense` — config-driven front end for the protocol simulation library.
//!
//! Subcommands:
//! * `run <config.json>`: execute the configuration (base run or all its
//!   variants) and write `timeseries.csv` + `summary.json`.
//! * `sweep <config.json>`: one run per value of the swept parameter, each
//!   in its own subdirectory, plus an aggregate `sweep.csv` with the fitted
//!   quantities per point.
//! * `check <protocol|all>`: evaluate each declared error set against the
//!   recoverability condition and compare with the protocol's declaration.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 runtime
//! fault, 3 check-expectation mismatch.

mod check;
mod config;
mod exec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qecsense::error::QecError;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
    CheckMismatch(usize),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    /// Library errors caused by the supplied configuration are validation
    /// errors; numerical/backend faults are runtime errors.
    pub fn from_qec(e: QecError) -> Self {
        match e {
            QecError::NumericalFault(_) | QecError::Backend(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "qecsense",
    version,
    about = "Trajectory simulations of error-corrected quantum sensing protocols"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a configuration (all variants) and write CSV/JSON artifacts.
    Run(RunArgs),
    /// Run a parameter sweep: per-point artifacts plus aggregate sweep.csv.
    Sweep(RunArgs),
    /// Report error-set correctability for one protocol or all of them.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 or unset means one per core. The QECSENSE_WORKERS
    /// environment variable supplies a default.
    #[arg(long)]
    workers: Option<usize>,
    /// Validate the configuration and print the resolved plan; write
    /// nothing.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Protocol name or "all".
    target: String,
    /// Also write a machine-readable check.json into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve_workers(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(w) = flag {
        return Ok(w);
    }
    match std::env::var("QECSENSE_WORKERS") {
        Ok(s) => s.trim().parse().map_err(|_| {
            CliError::validation(format!(
                "QECSENSE_WORKERS must be a non-negative integer, got '{s}'"
            ))
        }),
        Err(_) => Ok(0),
    }
}

fn with_pool<T>(
    workers: usize,
    body: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
    pool.install(body)
}

fn cmd_run(args: &RunArgs, sweep: bool) -> Result<(), CliError> {
    let loaded = config::load_config(&args.config)?;
    let runs = if sweep {
        config::resolve_sweep(&loaded, args.seed)?
    } else {
        config::resolve_runs(&loaded, args.seed)?
    };

    if args.dry_run {
        println!(
            "{}: ok ({} run{})",
            loaded.display_path,
            runs.len(),
            if runs.len() == 1 { "" } else { "s" }
        );
        exec::print_plan(&runs)?;
        return Ok(());
    }

    let workers = resolve_workers(args.workers)?;
    let outs: Vec<exec::RunOutput> = with_pool(workers, || {
        runs.iter().map(exec::execute_run).collect()
    })?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::runtime(format!("{}: {e}", args.out.display())))?;
    let echo = serde_json::to_value(&loaded.file)
        .map_err(|e| CliError::runtime(format!("config echo: {e}")))?;

    if sweep {
        for (i, out) in outs.iter().enumerate() {
            let dir = args.out.join(format!("point_{i:02}"));
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
            exec::write_timeseries(&dir.join("timeseries.csv"), std::slice::from_ref(out))?;
        }
        exec::write_sweep_aggregate(&args.out.join("sweep.csv"), &outs)?;
    } else {
        exec::write_timeseries(&args.out.join("timeseries.csv"), &outs)?;
    }
    exec::write_summary(
        &args.out.join("summary.json"),
        &echo,
        &loaded.display_path,
        workers,
        &outs,
    )?;

    for out in &outs {
        println!(
            "{:<28} {:>8} trajectories, {:>4} samples, {:>8} ms",
            out.label,
            out.n_traj,
            out.stats.sample_times.len(),
            out.wall_ms
        );
    }
    println!("artifacts in {}", args.out.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Run(args) => cmd_run(args, false),
        Cmd::Sweep(args) => cmd_run(args, true),
        Cmd::Check(args) => check::run_check(&args.target, args.out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::from(0),
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::CheckMismatch(n)) => {
            eprintln!("error: {n} error set(s) contradict their declared correctability");
            ExitCode::from(3)
        }
    }
}
