//! Sensitivity estimators and post-processing fits.
//!
//! The core quantity is the shot-noise-limited uncertainty of a coupling
//! estimate read out from an exchange-oscillation experiment of duration
//! `t`, repeated for a total averaging time `total_time` over `n` parallel
//! copies, while the protected coherence decays with time constant `t1`:
//!
//! ```text
//! δg(t) = √(e^{t/t1} − cos²(2 g t)) / (2 √(n·total_time·t) · |sin(2 g t)|)
//! ```
//!
//! Two small-angle (2gt ≪ 1) closed forms are provided alongside the full
//! expression: [`delta_g_small_angle`] is the form conventionally quoted
//! for this estimator, carrying a factor 4 on the (2gt)² term, while
//! [`delta_g_small_angle_taylor`] is the direct quadratic expansion of the
//! full expression (factor 1). They differ by that factor only; the full
//! expression is authoritative and both are kept so the discrepancy stays
//! visible in tests.

use num_complex::Complex64 as C64;

use crate::engine::{run_ensemble_map, Schedule};
use crate::error::{QecError, Result};
use crate::hilbert::QuantumState;
use crate::protocols::ProtocolSpec;

fn check_common(t1: f64, n: f64, total_time: f64) -> Result<()> {
    if !(t1 > 0.0) || !t1.is_finite() {
        return Err(QecError::EstimatorDomain(format!(
            "coherence time must be positive and finite, got {t1}"
        )));
    }
    if !(n >= 1.0) || !n.is_finite() {
        return Err(QecError::EstimatorDomain(format!(
            "number of parallel copies must be at least 1, got {n}"
        )));
    }
    if !(total_time > 0.0) || !total_time.is_finite() {
        return Err(QecError::EstimatorDomain(format!(
            "total averaging time must be positive and finite, got {total_time}"
        )));
    }
    Ok(())
}

fn check_probe_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(QecError::EstimatorDomain(format!(
            "probe time must be positive and finite, got {t}"
        )));
    }
    Ok(())
}

/// Shot-noise-limited uncertainty of the coupling estimate for probe time
/// `t`. Diverges (returns `+inf`) at the oscillation nodes sin(2gt) = 0.
pub fn delta_g(t: f64, t1: f64, g: f64, n: f64, total_time: f64) -> Result<f64> {
    check_probe_time(t)?;
    check_common(t1, n, total_time)?;
    let phase = 2.0 * g * t;
    let num = ((t / t1).exp() - phase.cos().powi(2)).max(0.0).sqrt();
    let den = 2.0 * (n * total_time * t).sqrt() * phase.sin().abs();
    Ok(num / den)
}

/// Small-angle form with the conventional factor 4 on the (2gt)² term:
/// √(e^{t/t1} − 1 + 4(2gt)²) / (2 √(n·total_time·t) · 2gt).
pub fn delta_g_small_angle(t: f64, t1: f64, g: f64, n: f64, total_time: f64) -> Result<f64> {
    check_probe_time(t)?;
    check_common(t1, n, total_time)?;
    let phase = 2.0 * g * t;
    let num = ((t / t1).exp() - 1.0 + 4.0 * phase * phase).sqrt();
    let den = 2.0 * (n * total_time * t).sqrt() * phase.abs();
    Ok(num / den)
}

/// Direct quadratic expansion of [`delta_g`] for 2gt ≪ 1:
/// √(e^{t/t1} − 1 + (2gt)²) / (2 √(n·total_time·t) · 2gt).
pub fn delta_g_small_angle_taylor(
    t: f64,
    t1: f64,
    g: f64,
    n: f64,
    total_time: f64,
) -> Result<f64> {
    check_probe_time(t)?;
    check_common(t1, n, total_time)?;
    let phase = 2.0 * g * t;
    let num = ((t / t1).exp() - 1.0 + phase * phase).sqrt();
    let den = 2.0 * (n * total_time * t).sqrt() * phase.abs();
    Ok(num / den)
}

/// Probe time in (0, t_max] minimizing [`delta_g`], with the attained
/// uncertainty. The objective has poles at the oscillation nodes
/// t = kπ/(2g); the search runs a golden-section pass in each of 16
/// subintervals and keeps the best finite candidate, so node-free minima
/// are found on either side of every pole inside the range.
pub fn optimal_time(g: f64, t1: f64, n: f64, total_time: f64, t_max: f64) -> Result<(f64, f64)> {
    check_common(t1, n, total_time)?;
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(QecError::EstimatorDomain(format!(
            "probe-time upper bound must be positive and finite, got {t_max}"
        )));
    }
    if !g.is_finite() {
        return Err(QecError::EstimatorDomain(format!(
            "coupling must be finite, got {g}"
        )));
    }
    let f = |t: f64| -> f64 {
        if t <= 0.0 || t > t_max {
            return f64::INFINITY;
        }
        match delta_g(t, t1, g, n, total_time) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    };

    let mut best_t = t_max;
    let mut best_v = f(t_max);
    let mut consider = |t: f64, v: f64| {
        if v < best_v {
            best_v = v;
            best_t = t;
        }
    };

    const SECTIONS: usize = 16;
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    for k in 0..SECTIONS {
        let mut a = t_max * k as f64 / SECTIONS as f64;
        let mut b = t_max * (k + 1) as f64 / SECTIONS as f64;
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = f(c);
        let mut fd = f(d);
        for _ in 0..120 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = f(d);
            }
        }
        let mid = 0.5 * (a + b);
        consider(mid, f(mid));
    }

    if !best_v.is_finite() {
        return Err(QecError::EstimatorDomain(
            "uncertainty is unbounded everywhere in the probe-time range \
             (is the coupling zero?)"
                .into(),
        ));
    }
    Ok((best_t, best_v))
}

/// How the oscillation envelope is extracted from a sampled signal before
/// the coherence-time fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvelopeMode {
    /// One point per oscillation period: the maximum sample, at its time.
    Maxima,
    /// One point per period: max − min, at the period center. Insensitive
    /// to a drifting baseline.
    PeakToPeak,
}

/// Result of an exponential envelope fit.
#[derive(Clone, Copy, Debug)]
pub struct CoherenceFit {
    /// Fitted 1/e decay time of the envelope.
    pub t2: f64,
    /// Delta-method standard error of `t2` from the regression residuals.
    pub t2_stderr: f64,
    /// Fitted envelope amplitude at t = 0.
    pub amplitude: f64,
    /// Set when the data do not resolve the decay (non-decaying fit, or
    /// `t2` beyond ten times the observation span); `t2` is then only a
    /// lower bound (infinite for a non-decaying fit).
    pub lower_bound: bool,
    /// Envelope points that survived the noise-floor filter.
    pub n_points: usize,
}

/// Fit an exponential decay time to the envelope of an oscillating,
/// zero-baseline signal (e.g. 2·p(t) − 1) sampled at `times`. The signal is
/// bucketed by oscillation period, the envelope per [`EnvelopeMode`] is
/// extracted, points below 5% of the largest envelope value are dropped as
/// noise floor, and ln(envelope) is fit linearly against time.
pub fn fit_coherence_time(
    times: &[f64],
    values: &[f64],
    period: f64,
    mode: EnvelopeMode,
) -> Result<CoherenceFit> {
    if times.len() != values.len() {
        return Err(QecError::EstimatorDomain(format!(
            "times ({}) and values ({}) differ in length",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 8 {
        return Err(QecError::EstimatorDomain(format!(
            "need at least 8 samples to resolve an envelope, got {}",
            times.len()
        )));
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(QecError::EstimatorDomain(format!(
            "oscillation period must be positive and finite, got {period}"
        )));
    }

    // Envelope: one point per period bucket.
    let mut buckets: std::collections::BTreeMap<i64, Vec<(f64, f64)>> =
        std::collections::BTreeMap::new();
    for (&t, &v) in times.iter().zip(values) {
        let idx = ((t / period) + 1e-9).floor() as i64;
        buckets.entry(idx).or_default().push((t, v));
    }
    let mut envelope: Vec<(f64, f64)> = Vec::with_capacity(buckets.len());
    for (idx, pts) in &buckets {
        match mode {
            EnvelopeMode::Maxima => {
                let &(t_at, v_max) = pts
                    .iter()
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("bucket is non-empty");
                envelope.push((t_at, v_max));
            }
            EnvelopeMode::PeakToPeak => {
                let v_max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                let v_min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let center = (*idx as f64 + 0.5) * period;
                envelope.push((center, v_max - v_min));
            }
        }
    }

    let peak = envelope
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(QecError::EstimatorDomain(
            "signal envelope is non-positive everywhere".into(),
        ));
    }
    let floor = 0.05 * peak;
    let pts: Vec<(f64, f64)> = envelope
        .into_iter()
        .filter(|&(_, e)| e > floor)
        .map(|(t, e)| (t, e.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(QecError::EstimatorDomain(format!(
            "only {} envelope points above the noise floor; need at least 4",
            pts.len()
        )));
    }

    // Linear regression of ln(envelope) on time.
    let m = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - t_mean).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(QecError::EstimatorDomain(
            "envelope points share a single time; cannot fit a decay".into(),
        ));
    }
    let sxy: f64 = pts
        .iter()
        .map(|p| (p.0 - t_mean) * (p.1 - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let slope_var = ss_res / (m - 2.0) / sxx;
    let slope_stderr = slope_var.sqrt();

    let span = pts.last().unwrap().0 - pts.first().unwrap().0;
    let amplitude = intercept.exp();
    if slope >= 0.0 {
        return Ok(CoherenceFit {
            t2: f64::INFINITY,
            t2_stderr: f64::INFINITY,
            amplitude,
            lower_bound: true,
            n_points: pts.len(),
        });
    }
    let t2 = -1.0 / slope;
    let t2_stderr = slope_stderr / (slope * slope);
    Ok(CoherenceFit {
        t2,
        t2_stderr,
        amplitude,
        lower_bound: t2 > 10.0 * span,
        n_points: pts.len(),
    })
}

/// Ensemble statistics of the leaked amplitude β = ⟨target|ψ_final⟩.
#[derive(Clone, Copy, Debug)]
pub struct RandomWalkStats {
    pub n_traj: usize,
    /// Components of ⟨β⟩ with their standard errors.
    pub mean_re: f64,
    pub mean_im: f64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    /// ⟨|β|²⟩ with its standard error.
    pub mean_abs2: f64,
    pub stderr_abs2: f64,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Run an ensemble and collect the per-trajectory amplitude that leaked
/// into `target` by the end of the run. Under correction, each jump kicks
/// this amplitude by a fixed magnitude with a sign set by the jump's
/// phase, so |β|² performs a random walk whose mean grows linearly with
/// the number of jumps.
pub fn random_walk_stats(
    spec: &ProtocolSpec,
    schedule: &Schedule,
    n_traj: usize,
    master_seed: u64,
    target: &QuantumState,
) -> Result<RandomWalkStats> {
    let betas: Vec<C64> = run_ensemble_map(spec, schedule, n_traj, master_seed, |rec| {
        target.inner(&rec.final_state)
    })?;
    let re: Vec<f64> = betas.iter().map(|b| b.re).collect();
    let im: Vec<f64> = betas.iter().map(|b| b.im).collect();
    let abs2: Vec<f64> = betas.iter().map(|b| b.norm_sqr()).collect();
    let (mean_re, stderr_re) = mean_stderr(&re);
    let (mean_im, stderr_im) = mean_stderr(&im);
    let (mean_abs2, stderr_abs2) = mean_stderr(&abs2);
    Ok(RandomWalkStats {
        n_traj,
        mean_re,
        mean_im,
        stderr_re,
        stderr_im,
        mean_abs2,
        stderr_abs2,
    })
}
