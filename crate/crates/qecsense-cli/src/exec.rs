//! Runs resolved configurations and writes the on-disk artifacts:
//! `timeseries.csv` (long format, one row per variant/observable/time),
//! `summary.json`, and for sweeps the aggregate `sweep.csv`.
//!
//! All floats are serialized with `{:.16e}` (17 significant digits), and
//! rows are emitted in configuration order, so outputs are byte-identical
//! for a given (config, seed) regardless of worker count.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use qecsense::engine::{run_ensemble, run_reference, EnsembleStats};
use qecsense::estimators::{delta_g, fit_coherence_time, optimal_time, CoherenceFit, EnvelopeMode};
use qecsense::protocols::SignalObservable;

use crate::config::{FitConfig, FitMode, OutputKind, ResolvedRun};
use crate::CliError;

pub struct RunOutput {
    pub label: String,
    pub protocol: String,
    pub n_traj: usize,
    pub master_seed: u64,
    pub outputs: Vec<OutputKind>,
    pub signal: SignalObservable,
    pub stats: EnsembleStats,
    /// Ideal-signal values at the (snapped) sample times.
    pub ideal: Vec<f64>,
    pub photon_labels: Vec<String>,
    pub fit: Option<FitOutcome>,
    pub sweep_point: Option<(String, f64)>,
    pub wall_ms: u128,
}

pub enum FitOutcome {
    Coherence(CoherenceFit),
    Sensitivity {
        t1: f64,
        t_opt: f64,
        dg_strong: f64,
        dg_ec: f64,
        dg_ratio: f64,
    },
}

pub fn execute_run(run: &ResolvedRun) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let stats = run_ensemble(&run.spec, &run.schedule, run.config.n_traj, run.master_seed)
        .map_err(CliError::from_qec)?;
    let ideal: Vec<f64> = stats
        .sample_times
        .iter()
        .map(|&t| run.spec.ideal_signal.eval(t))
        .collect();
    let fit = compute_fit(run, &stats)?;
    Ok(RunOutput {
        label: run.label.clone(),
        protocol: run.spec.name.clone(),
        n_traj: run.config.n_traj,
        master_seed: run.master_seed,
        outputs: run.outputs.clone(),
        signal: run.spec.signal_observable,
        stats,
        ideal,
        photon_labels: run.spec.channels.iter().map(|c| c.label.clone()).collect(),
        fit,
        sweep_point: run.sweep_point.clone(),
        wall_ms: start.elapsed().as_millis(),
    })
}

fn compute_fit(run: &ResolvedRun, stats: &EnsembleStats) -> Result<Option<FitOutcome>, CliError> {
    let Some(fit) = &run.config.fit else {
        return Ok(None);
    };
    match fit {
        FitConfig::CoherenceTime { mode, period } => {
            let period = period.or_else(|| run.spec.ideal_signal.period()).ok_or_else(|| {
                CliError::validation(format!(
                    "run '{}': protocol '{}' has no oscillation period; set fit.period",
                    run.label, run.spec.name
                ))
            })?;
            let series = stats.signal(run.spec.signal_observable);
            let mode = match mode {
                FitMode::Maxima => EnvelopeMode::Maxima,
                FitMode::PeakToPeak => EnvelopeMode::PeakToPeak,
            };
            // Failures here depend on the measured data (e.g. the envelope
            // never rises above the noise floor), so they count as runtime.
            let fit = fit_coherence_time(&stats.sample_times, &series.mean, period, mode)
                .map_err(|e| CliError::runtime(format!("run '{}': {e}", run.label)))?;
            Ok(Some(FitOutcome::Coherence(fit)))
        }
        FitConfig::Sensitivity {
            n_probes,
            total_time,
            t_max_factor,
        } => {
            let p = &run.spec.params;
            if !(p.gamma > 0.0) {
                return Err(CliError::validation(format!(
                    "run '{}': the sensitivity table needs gamma > 0 (T1 = 1/gamma)",
                    run.label
                )));
            }
            let t1 = 1.0 / p.gamma;
            let (t_opt, dg_strong) =
                optimal_time(p.g, t1, *n_probes, *total_time, t_max_factor * t1)
                    .map_err(CliError::from_qec)?;
            // Decoherence-free limit of the uncertainty at probe time T1:
            // with the exponential factor forced to ~1 the formula reduces
            // to 1/(2·sqrt(n·T·t)) independent of g.
            let dg_ec = delta_g(t1, 1e12 * t1, p.g, *n_probes, *total_time)
                .map_err(CliError::from_qec)?;
            Ok(Some(FitOutcome::Sensitivity {
                t1,
                t_opt,
                dg_strong,
                dg_ec,
                dg_ratio: dg_ec / dg_strong,
            }))
        }
    }
}

/// Validate a run without executing the ensemble: builds the engine state
/// and the noiseless reference (which exercises every schedule check), then
/// verifies the fit block is computable for this protocol.
pub fn validate_run(run: &ResolvedRun) -> Result<usize, CliError> {
    let reference = run_reference(&run.spec, &run.schedule).map_err(CliError::from_qec)?;
    match &run.config.fit {
        None => {}
        Some(FitConfig::CoherenceTime { period, .. }) => {
            period.or_else(|| run.spec.ideal_signal.period()).ok_or_else(|| {
                CliError::validation(format!(
                    "run '{}': protocol '{}' has no oscillation period; set fit.period",
                    run.label, run.spec.name
                ))
            })?;
        }
        Some(FitConfig::Sensitivity {
            n_probes,
            total_time,
            t_max_factor,
        }) => {
            let p = &run.spec.params;
            if !(p.gamma > 0.0) {
                return Err(CliError::validation(format!(
                    "run '{}': the sensitivity table needs gamma > 0 (T1 = 1/gamma)",
                    run.label
                )));
            }
            let t1 = 1.0 / p.gamma;
            optimal_time(p.g, t1, *n_probes, *total_time, t_max_factor * t1)
                .map_err(CliError::from_qec)?;
        }
    }
    Ok(reference.sample_times.len())
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn series_for<'a>(
    out: &'a RunOutput,
    kind: &OutputKind,
) -> (&'a [f64], Option<&'a [f64]>) {
    let stats = &out.stats;
    match kind {
        OutputKind::Fidelity => (&stats.fidelity.mean, Some(&stats.fidelity.stderr)),
        OutputKind::Survival => (&stats.survival.mean, Some(&stats.survival.stderr)),
        OutputKind::CodePop => (&stats.code_pop.mean, Some(&stats.code_pop.stderr)),
        OutputKind::UtilityPop => (&stats.utility_pop.mean, Some(&stats.utility_pop.stderr)),
        OutputKind::Signal => {
            let s = stats.signal(out.signal);
            (&s.mean, Some(&s.stderr))
        }
        OutputKind::IdealSignal => (&out.ideal, None),
        OutputKind::CodeState(w, _) => (
            &stats.code_state_pops[*w].mean,
            Some(&stats.code_state_pops[*w].stderr),
        ),
    }
}

pub fn write_timeseries(path: &Path, outs: &[RunOutput]) -> Result<(), CliError> {
    let file = fs::File::create(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| CliError::runtime(format!("{}: {e}", path.display()));
    writeln!(w, "variant,time,observable,mean,stderr").map_err(io_err)?;
    for out in outs {
        for kind in &out.outputs {
            let name = kind.column_name();
            let (mean, stderr) = series_for(out, kind);
            for (i, &t) in out.stats.sample_times.iter().enumerate() {
                let se = stderr.map_or(0.0, |s| s[i]);
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    out.label,
                    fmt(t),
                    name,
                    fmt(mean[i]),
                    fmt(se)
                )
                .map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

fn fit_to_json(fit: &FitOutcome) -> Value {
    match fit {
        FitOutcome::Coherence(c) => json!({
            "kind": "coherence_time",
            "t2": c.t2,
            "t2_stderr": c.t2_stderr,
            "amplitude": c.amplitude,
            "lower_bound": c.lower_bound,
            "n_points": c.n_points,
        }),
        FitOutcome::Sensitivity {
            t1,
            t_opt,
            dg_strong,
            dg_ec,
            dg_ratio,
        } => json!({
            "kind": "sensitivity",
            "t1": t1,
            "t_opt": t_opt,
            "dg_strong": dg_strong,
            "dg_ec": dg_ec,
            "dg_ratio": dg_ratio,
        }),
    }
}

pub fn write_summary(
    path: &Path,
    config_echo: &Value,
    config_path: &str,
    workers: usize,
    outs: &[RunOutput],
) -> Result<(), CliError> {
    let runs: Vec<Value> = outs
        .iter()
        .map(|out| {
            let photons: Vec<Value> = out
                .photon_labels
                .iter()
                .zip(&out.stats.photon_counts)
                .map(|(label, s)| {
                    json!({"channel": label, "mean": s.mean, "stderr": s.stderr})
                })
                .collect();
            let mut entry = json!({
                "label": out.label,
                "protocol": out.protocol,
                "n_traj": out.n_traj,
                "master_seed": out.master_seed,
                "n_samples": out.stats.sample_times.len(),
                "wall_ms": out.wall_ms,
                "photon_counts": photons,
                "fit": out.fit.as_ref().map(|f| fit_to_json(f)),
            });
            if let Some((param, value)) = &out.sweep_point {
                entry["sweep_parameter"] = json!(param);
                entry["sweep_value"] = json!(value);
            }
            entry
        })
        .collect();
    let summary = json!({
        "tool": {"name": "qecsense", "version": env!("CARGO_PKG_VERSION")},
        "config_path": config_path,
        "config": config_echo,
        "workers": workers,
        "runs": runs,
    });
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::runtime(format!("summary serialization: {e}")))?;
    fs::write(path, text + "\n")
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

/// Aggregate table for sweeps: one row per point, with the fitted
/// quantities of the configured fit kind as extra columns.
pub fn write_sweep_aggregate(path: &Path, outs: &[RunOutput]) -> Result<(), CliError> {
    let file = fs::File::create(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| CliError::runtime(format!("{}: {e}", path.display()));

    let fit_header = match outs.iter().find_map(|o| o.fit.as_ref()) {
        Some(FitOutcome::Coherence(_)) => ",t2,t2_stderr,amplitude,lower_bound,n_points",
        Some(FitOutcome::Sensitivity { .. }) => ",t1,t_opt,dg_strong,dg_ec,dg_ratio",
        None => "",
    };
    writeln!(w, "label,parameter,value,n_traj,master_seed{fit_header}").map_err(io_err)?;
    for out in outs {
        let (param, value) = out
            .sweep_point
            .as_ref()
            .map(|(p, v)| (p.as_str(), *v))
            .unwrap_or(("", f64::NAN));
        write!(
            w,
            "{},{},{},{},{}",
            out.label,
            param,
            fmt(value),
            out.n_traj,
            out.master_seed
        )
        .map_err(io_err)?;
        match &out.fit {
            Some(FitOutcome::Coherence(c)) => write!(
                w,
                ",{},{},{},{},{}",
                fmt(c.t2),
                fmt(c.t2_stderr),
                fmt(c.amplitude),
                c.lower_bound,
                c.n_points
            )
            .map_err(io_err)?,
            Some(FitOutcome::Sensitivity {
                t1,
                t_opt,
                dg_strong,
                dg_ec,
                dg_ratio,
            }) => write!(
                w,
                ",{},{},{},{},{}",
                fmt(*t1),
                fmt(*t_opt),
                fmt(*dg_strong),
                fmt(*dg_ec),
                fmt(*dg_ratio)
            )
            .map_err(io_err)?,
            None => {}
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn print_plan(runs: &[ResolvedRun]) -> Result<(), CliError> {
    println!(
        "{:<28} {:<16} {:>5} {:>8} {:>9} {:>8} {:>10}",
        "run", "protocol", "dim", "n_traj", "steps", "samples", "ec_steps"
    );
    for run in runs {
        let n_samples = validate_run(run)?;
        let steps = (run.schedule.total_time / run.schedule.dt).round() as usize;
        let ec = run
            .schedule
            .ec_interval
            .map(|iv| format!("{:.0}", (iv / run.schedule.dt).round()))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<28} {:<16} {:>5} {:>8} {:>9} {:>8} {:>10}",
            run.label,
            run.spec.name,
            run.spec.layout.dim(),
            run.config.n_traj,
            steps,
            n_samples,
            ec
        );
    }
    Ok(())
}
