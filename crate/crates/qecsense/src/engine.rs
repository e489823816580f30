//! Trajectory engine.
//!
//! Steps a protocol's stochastic wavefunction over a uniform time grid:
//! the coherent part of each step is applied exactly in the eigenbasis of
//! the Hamiltonian evaluated at the step midpoint, dissipation uses the
//! first-order jump/no-jump unraveling with a single uniform draw per step,
//! and scheduled boundaries trigger decoupling pulses, the protocol's
//! correction cycle, and interferometric analysis pulses.
//!
//! Within one step covering [t, t + dt] the stage order is frozen:
//! 1. coherent propagator for the midpoint Hamiltonian,
//! 2. jump stage (forced jumps for this boundary replace the random draw),
//! 3. forced unitaries scheduled for this boundary,
//! 4. decoupling pulse if the boundary is an odd half-period,
//! 5. correction cycle if the boundary is a cycle multiple (clears the
//!    photon-since-last-cycle flags),
//! 6. analysis pulse if this is the final boundary of an interferometric
//!    run,
//! 7. observable sampling.
//! Boundary 0 (before any evolution) applies the preparation pulse, forced
//! events at t = 0, and sampling only.
//!
//! Determinism: trajectory k draws from `ChaCha8` seeded with
//! `mix_seed(master_seed, k)`, classical noise traces are pure functions of
//! `(trace seed, window index)`, and ensemble reduction folds records in
//! trajectory order, so results are bit-identical for any worker count.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{QecError, Result};
use crate::hilbert::{measure_projective, Operator, QuantumState, C64};
use crate::noise::{mix_seed, no_jump_drift_operator, ClassicalNoiseTrace, PhotonRecord};
use crate::protocols::{CoefficientProfile, EcNode, ProtocolSpec, SignalObservable};

/// Largest per-channel jump probability scale allowed per step; beyond this
/// the first-order unraveling is no longer accurate.
pub const MAX_RATE_DT: f64 = 0.05;
/// Largest `dt · |coefficient| · ‖H_k‖` allowed for time-varying terms; the
/// midpoint piecewise-constant propagator is exact for static terms.
pub const MAX_VARYING_ACTION: f64 = 0.05;
/// Tolerance for matching a measured eigenvalue to a branch of the
/// correction tree.
const ARM_TOL: f64 = 1e-6;
/// Upper bound on cached step propagators per trajectory.
const PROPAGATOR_CACHE_CAP: usize = 4096;

/// Time grid and control cadence. All boundaries (total time, correction
/// cycles, pulse half-periods) must sit on the `dt` grid; sample times are
/// snapped to the nearest boundary.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub dt: f64,
    pub total_time: f64,
    pub sample_times: Vec<f64>,
    /// Spacing of correction cycles; `None` disables correction.
    pub ec_interval: Option<f64>,
    /// Full period of the decoupling pulse train; pulses fire at odd half
    /// periods (τ/2, 3τ/2, …). Requires the protocol to define a pulse.
    pub dd_period: Option<f64>,
    /// Resampling interval of the classical noise traces; required iff the
    /// protocol declares noise traces.
    pub noise_resample: Option<f64>,
    /// Apply the protocol's preparation/analysis pulse pair.
    pub apply_ramsey: bool,
}

impl Schedule {
    /// Plain run: fixed step, total time, and sample times, no correction,
    /// no pulse train.
    pub fn plain(dt: f64, total_time: f64, sample_times: Vec<f64>) -> Self {
        Schedule {
            dt,
            total_time,
            sample_times,
            ec_interval: None,
            dd_period: None,
            noise_resample: None,
            apply_ramsey: false,
        }
    }
}

/// An event injected deterministically at a grid boundary (time snapped to
/// the nearest step). Forced jumps replace the random draw of their step;
/// forced unitaries apply right after the jump stage.
#[derive(Clone, Debug)]
pub struct ForcedEvent {
    pub time: f64,
    pub kind: ForcedEventKind,
}

#[derive(Clone, Debug)]
pub enum ForcedEventKind {
    Jump { channel: usize },
    Unitary { op: Arc<Operator> },
}

/// One trajectory's sampled observables. Series are indexed like
/// `sample_times`.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub seed_index: u64,
    pub sample_times: Vec<f64>,
    /// |⟨ψ_ref(t)|ψ(t)⟩|² against the noiseless, uncorrected reference.
    pub fidelity: Vec<f64>,
    /// |⟨ψ(0)|ψ(t)⟩|² against the post-preparation initial state.
    pub survival: Vec<f64>,
    pub code_pop: Vec<f64>,
    pub utility_pop: Vec<f64>,
    /// Per code word: population series, outer index = code word.
    pub code_state_pops: Vec<Vec<f64>>,
    /// Final photon count per channel.
    pub photon_counts: Vec<u64>,
    pub final_state: QuantumState,
}

#[derive(Clone, Debug)]
pub struct ScalarStats {
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and standard error per sample time.
#[derive(Clone, Debug)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Ensemble reduction of trajectory records; standard errors use the
/// sample standard deviation (ddof = 1), zero for a single trajectory.
#[derive(Clone, Debug)]
pub struct EnsembleStats {
    pub n_traj: usize,
    pub sample_times: Vec<f64>,
    pub fidelity: SeriesStats,
    pub survival: SeriesStats,
    pub code_pop: SeriesStats,
    pub utility_pop: SeriesStats,
    pub code_state_pops: Vec<SeriesStats>,
    pub photon_counts: Vec<ScalarStats>,
}

impl EnsembleStats {
    /// The series carrying the protocol's declared signal observable.
    pub fn signal(&self, observable: SignalObservable) -> &SeriesStats {
        match observable {
            SignalObservable::Survival => &self.survival,
            SignalObservable::CodePop(i) => &self.code_state_pops[i],
        }
    }
}

/// Schedule resolved onto the step grid.
#[derive(Clone, Debug)]
struct Compiled {
    n_steps: usize,
    /// Sorted, deduplicated sample boundaries.
    sample_steps: Vec<usize>,
    sample_times: Vec<f64>,
    ec_every: Option<usize>,
    /// Pulses fire at boundaries b with b ≡ h (mod 2h).
    dd_half_steps: Option<usize>,
}

fn snap_to_grid(t: f64, dt: f64, n_steps: usize, what: &str) -> Result<usize> {
    let tol = 1e-9 * (1.0f64).max(n_steps as f64 * dt);
    if !(t >= -tol) || t > n_steps as f64 * dt + tol {
        return Err(QecError::ScheduleInvalid(format!(
            "{what} {t} lies outside the run interval [0, {}]",
            n_steps as f64 * dt
        )));
    }
    Ok(((t / dt).round() as usize).min(n_steps))
}

/// Number of grid units in `span`, required to be a positive integer
/// multiple of `unit` within relative tolerance 1e-9.
fn grid_multiple(span: f64, unit: f64, what: &str) -> Result<usize> {
    if !(span > 0.0) || !span.is_finite() {
        return Err(QecError::ScheduleInvalid(format!(
            "{what} must be positive and finite, got {span}"
        )));
    }
    let k = (span / unit).round();
    if k < 1.0 || (k * unit - span).abs() > 1e-9 * (1.0f64).max(span.abs()) {
        return Err(QecError::ScheduleInvalid(format!(
            "{what} {span} is not a positive integer multiple of {unit}"
        )));
    }
    Ok(k as usize)
}

fn walk_ec_channels(node: &EcNode, n_channels: usize) -> Result<()> {
    match node {
        EcNode::Accept => Ok(()),
        EcNode::Measure { arms, otherwise, .. } => {
            for (_, n) in arms {
                walk_ec_channels(n, n_channels)?;
            }
            walk_ec_channels(otherwise, n_channels)
        }
        EcNode::Correct { then, .. } => walk_ec_channels(then, n_channels),
        EcNode::IfPhotonSince {
            channels,
            then,
            else_,
        } => {
            if let Some(&c) = channels.iter().find(|&&c| c >= n_channels) {
                return Err(QecError::ProtocolInvalid(format!(
                    "correction tree consults photon channel {c}, but the \
                     protocol has only {n_channels} channels"
                )));
            }
            walk_ec_channels(then, n_channels)?;
            walk_ec_channels(else_, n_channels)
        }
    }
}

fn compile(spec: &ProtocolSpec, sched: &Schedule) -> Result<Compiled> {
    if !(sched.dt > 0.0) || !sched.dt.is_finite() {
        return Err(QecError::ScheduleInvalid(format!(
            "step size must be positive and finite, got {}",
            sched.dt
        )));
    }
    if !(sched.total_time >= 0.0) || !sched.total_time.is_finite() {
        return Err(QecError::ScheduleInvalid(format!(
            "total time must be non-negative and finite, got {}",
            sched.total_time
        )));
    }
    let n_steps = if sched.total_time == 0.0 {
        0
    } else {
        grid_multiple(sched.total_time, sched.dt, "total time")?
    };

    let mut sample_steps: Vec<usize> = sched
        .sample_times
        .iter()
        .map(|&t| snap_to_grid(t, sched.dt, n_steps, "sample time"))
        .collect::<Result<_>>()?;
    sample_steps.sort_unstable();
    sample_steps.dedup();
    let sample_times: Vec<f64> = sample_steps.iter().map(|&s| s as f64 * sched.dt).collect();

    let ec_every = match sched.ec_interval {
        None => None,
        Some(iv) => Some(grid_multiple(iv, sched.dt, "correction interval")?),
    };

    let dd_half_steps = match sched.dd_period {
        None => None,
        Some(period) => {
            if spec.dd_swap.is_none() {
                return Err(QecError::ScheduleInvalid(format!(
                    "protocol '{}' defines no decoupling pulse, but a pulse \
                     period was scheduled",
                    spec.name
                )));
            }
            Some(grid_multiple(period / 2.0, sched.dt, "pulse half-period")?)
        }
    };

    if sched.apply_ramsey && spec.ramsey.is_none() {
        return Err(QecError::ScheduleInvalid(format!(
            "protocol '{}' has no preparation/analysis pulse pair",
            spec.name
        )));
    }

    if spec.noise_traces.is_empty() {
        if sched.noise_resample.is_some() {
            return Err(QecError::ScheduleInvalid(format!(
                "protocol '{}' has no classical noise traces, but a resample \
                 interval was scheduled",
                spec.name
            )));
        }
    } else {
        match sched.noise_resample {
            Some(iv) if iv > 0.0 && iv.is_finite() => {}
            _ => {
                return Err(QecError::ScheduleInvalid(format!(
                    "protocol '{}' uses classical noise; a positive \
                     noise_resample interval is required",
                    spec.name
                )))
            }
        }
    }

    for ch in &spec.channels {
        if ch.rate * sched.dt > MAX_RATE_DT + 1e-12 {
            return Err(QecError::ScheduleInvalid(format!(
                "channel '{}': rate·dt = {:.4} exceeds {MAX_RATE_DT}; shrink dt",
                ch.label,
                ch.rate * sched.dt
            )));
        }
    }

    for (i, term) in spec.terms.iter().enumerate() {
        let coeff_bound = match term.profile {
            CoefficientProfile::Static(_) => continue, // handled exactly
            CoefficientProfile::Cosine { amp, .. } => amp.abs(),
            CoefficientProfile::Noise { trace_index } => {
                let tr = spec.noise_traces.get(trace_index).ok_or_else(|| {
                    QecError::ProtocolInvalid(format!(
                        "term {i} reads noise trace {trace_index}, but only \
                         {} traces are declared",
                        spec.noise_traces.len()
                    ))
                })?;
                tr.lo.abs().max(tr.hi.abs())
            }
        };
        let action = coeff_bound * sched.dt * term.op.spectral_norm()?;
        if action > MAX_VARYING_ACTION + 1e-12 {
            return Err(QecError::ScheduleInvalid(format!(
                "time-varying term {i}: dt·|coeff|·‖H‖ = {action:.4} exceeds \
                 {MAX_VARYING_ACTION}; shrink dt"
            )));
        }
    }

    walk_ec_channels(&spec.ec, spec.channels.len())?;

    Ok(Compiled {
        n_steps,
        sample_steps,
        sample_times,
        ec_every,
        dd_half_steps,
    })
}

/// Per-channel jump machinery with the rate folded in: the jump probability
/// per step is dt·⟨ψ|K|ψ⟩ with K = rate·J†J, evaluated in O(dim) when K is
/// diagonal (every pure lowering/transition operator).
enum ChannelKernel {
    Diagonal(Vec<f64>),
    Dense(Operator),
}

impl ChannelKernel {
    fn build(op: &Operator, rate: f64) -> ChannelKernel {
        let k = op.adjoint().matmul(op);
        let d = k.mat.nrows();
        let mut off_diag = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    off_diag = off_diag.max(k.mat[[i, j]].norm());
                }
            }
        }
        if off_diag < 1e-14 {
            ChannelKernel::Diagonal((0..d).map(|i| rate * k.mat[[i, i]].re).collect())
        } else {
            ChannelKernel::Dense(k.scaled(C64::new(rate, 0.0)))
        }
    }

    /// rate·‖Jψ‖² for a normalized ψ.
    fn weight(&self, psi: &QuantumState) -> f64 {
        match self {
            ChannelKernel::Diagonal(diag) => psi
                .data
                .iter()
                .zip(diag.iter())
                .map(|(a, &k)| k * a.norm_sqr())
                .sum(),
            ChannelKernel::Dense(k) => k.expectation(psi),
        }
    }
}

/// Run-wide immutable pieces shared by every trajectory.
struct SharedOps {
    /// No-jump drift for one step, `None` when the protocol has no channels.
    drift: Option<Operator>,
    kernels: Vec<ChannelKernel>,
    /// Single propagator when every Hamiltonian term is static.
    static_u: Option<Arc<Array2<C64>>>,
    prep_pulse: Option<Operator>,
    analyze_pulse: Option<Operator>,
}

fn build_shared(spec: &ProtocolSpec, sched: &Schedule) -> Result<SharedOps> {
    let drift = if spec.channels.is_empty() {
        None
    } else {
        Some(no_jump_drift_operator(&spec.channels, sched.dt)?)
    };
    let kernels = spec
        .channels
        .iter()
        .map(|ch| ChannelKernel::build(&ch.op, ch.rate))
        .collect();

    let all_static = spec
        .terms
        .iter()
        .all(|t| matches!(t.profile, CoefficientProfile::Static(_)));
    let static_u = if all_static {
        let coeffs: Vec<f64> = spec
            .terms
            .iter()
            .map(|t| match t.profile {
                CoefficientProfile::Static(c) => c,
                _ => unreachable!(),
            })
            .collect();
        Some(Arc::new(build_propagator(spec, &coeffs, sched.dt)?))
    } else {
        None
    };

    let (prep_pulse, analyze_pulse) = match (&spec.ramsey, sched.apply_ramsey) {
        (Some(r), true) => (
            Some((r.pulse)(0.0)),
            Some((r.pulse)(r.carrier * sched.total_time)),
        ),
        _ => (None, None),
    };

    Ok(SharedOps {
        drift,
        kernels,
        static_u,
        prep_pulse,
        analyze_pulse,
    })
}

/// Exact propagator e^{-i H dt} for the Hamiltonian assembled from the
/// given per-term coefficients.
fn build_propagator(spec: &ProtocolSpec, coeffs: &[f64], dt: f64) -> Result<Array2<C64>> {
    let d = spec.layout.dim();
    let mut h = Array2::<C64>::zeros((d, d));
    for (term, &c) in spec.terms.iter().zip(coeffs) {
        if c != 0.0 {
            h.scaled_add(C64::new(c, 0.0), &term.op.mat);
        }
    }
    let op = Operator::hermitian_from_matrix(&spec.layout, h)?;
    op.propagator(dt)
}

/// Reference data shared by all trajectories of a run: noiseless,
/// dissipation-free, uncorrected evolution (pulse train and analysis pulses
/// included), recorded at the sample boundaries.
struct RefData {
    /// Post-preparation state at boundary 0 (before any analysis pulse).
    psi0: QuantumState,
    /// State at each sample boundary.
    states: Vec<QuantumState>,
    /// State after the full run.
    final_state: QuantumState,
}

/// Per-trajectory propagator lookup.
struct PropagatorCache {
    map: HashMap<Vec<u64>, Arc<Array2<C64>>>,
}

impl PropagatorCache {
    fn new() -> Self {
        PropagatorCache {
            map: HashMap::new(),
        }
    }

    fn get_or_build(
        &mut self,
        spec: &ProtocolSpec,
        coeffs: &[f64],
        varying: &[f64],
        dt: f64,
    ) -> Result<Arc<Array2<C64>>> {
        let key: Vec<u64> = varying.iter().map(|c| c.to_bits()).collect();
        if let Some(u) = self.map.get(&key) {
            return Ok(u.clone());
        }
        let u = Arc::new(build_propagator(spec, coeffs, dt)?);
        if self.map.len() < PROPAGATOR_CACHE_CAP {
            self.map.insert(key, u.clone());
        }
        Ok(u)
    }
}

fn apply_matrix(mat: &Array2<C64>, state: &mut QuantumState, scratch: &mut Array1<C64>) {
    general_mat_vec_mul(
        C64::new(1.0, 0.0),
        mat,
        &state.data,
        C64::new(0.0, 0.0),
        scratch,
    );
    std::mem::swap(&mut state.data, scratch);
}

/// Walk the correction tree: measure, branch, correct.
fn run_ec_cycle<R: Rng + ?Sized>(
    root: &EcNode,
    mut psi: QuantumState,
    rng: &mut R,
    photon_since: &[bool],
) -> Result<QuantumState> {
    let mut node = root;
    loop {
        match node {
            EcNode::Accept => return Ok(psi),
            EcNode::Measure {
                observable,
                arms,
                otherwise,
            } => {
                let outcome = measure_projective(&psi, observable, rng)?;
                psi = outcome.post_state;
                node = arms
                    .iter()
                    .find(|(ev, _)| (ev - outcome.eigenvalue).abs() < ARM_TOL)
                    .map(|(_, n)| n)
                    .unwrap_or(otherwise);
            }
            EcNode::Correct { op, then } => {
                psi = op.apply(&psi);
                node = then;
            }
            EcNode::IfPhotonSince {
                channels,
                then,
                else_,
            } => {
                node = if channels.iter().any(|&c| photon_since[c]) {
                    then
                } else {
                    else_
                };
            }
        }
    }
}

/// Evolve the reference (noiseless, dissipation-free, uncorrected) and
/// collect its state at each sample boundary.
fn compute_reference(
    spec: &ProtocolSpec,
    sched: &Schedule,
    comp: &Compiled,
    shared: &SharedOps,
) -> Result<RefData> {
    let d = spec.layout.dim();
    let mut psi = spec.initial_state.clone();
    let mut scratch = Array1::<C64>::zeros(d);
    let mut cache = PropagatorCache::new();
    if let Some(prep) = &shared.prep_pulse {
        psi = prep.apply(&psi);
    }
    let psi0 = psi.clone();
    // A zero-length run degenerates to preparation followed immediately by
    // analysis, so the fringe limit cos²(0) = 1 holds exactly.
    if comp.n_steps == 0 {
        if let Some(analyze) = &shared.analyze_pulse {
            psi = analyze.apply(&psi);
        }
    }
    let mut states = Vec::with_capacity(comp.sample_steps.len());
    let mut sample_ptr = 0;
    if comp.sample_steps.first() == Some(&0) {
        states.push(psi.clone());
        sample_ptr += 1;
    }
    let n_terms = spec.terms.len();
    let mut coeffs = vec![0.0f64; n_terms];
    let mut varying = Vec::new();
    for step in 0..comp.n_steps {
        let u = match &shared.static_u {
            Some(u) => u.clone(),
            None => {
                let t_mid = (step as f64 + 0.5) * sched.dt;
                varying.clear();
                for (k, term) in spec.terms.iter().enumerate() {
                    coeffs[k] = match term.profile {
                        CoefficientProfile::Static(c) => c,
                        CoefficientProfile::Cosine { amp, omega, phase } => {
                            let c = amp * (omega * t_mid + phase).cos();
                            varying.push(c);
                            c
                        }
                        CoefficientProfile::Noise { .. } => {
                            varying.push(0.0);
                            0.0
                        }
                    };
                }
                cache.get_or_build(spec, &coeffs, &varying, sched.dt)?
            }
        };
        apply_matrix(&u, &mut psi, &mut scratch);
        let boundary = step + 1;
        if let Some(h) = comp.dd_half_steps {
            if boundary % (2 * h) == h {
                psi = spec.dd_swap.as_ref().unwrap().apply(&psi);
            }
        }
        if boundary == comp.n_steps {
            if let Some(analyze) = &shared.analyze_pulse {
                psi = analyze.apply(&psi);
            }
        }
        if sample_ptr < comp.sample_steps.len() && comp.sample_steps[sample_ptr] == boundary {
            states.push(psi.clone());
            sample_ptr += 1;
        }
    }
    Ok(RefData {
        psi0,
        states,
        final_state: psi,
    })
}

/// One stochastic trajectory against precomputed shared/reference data.
#[allow(clippy::too_many_arguments)]
fn run_one(
    spec: &ProtocolSpec,
    sched: &Schedule,
    comp: &Compiled,
    shared: &SharedOps,
    reference: &RefData,
    master_seed: u64,
    seed_index: u64,
    forced: &[(usize, ForcedEventKind)],
) -> Result<TrajectoryRecord> {
    let d = spec.layout.dim();
    let n_channels = spec.channels.len();
    let traj_seed = mix_seed(master_seed, seed_index);
    let mut rng = ChaCha8Rng::seed_from_u64(traj_seed);

    let traces: Vec<ClassicalNoiseTrace> = spec
        .noise_traces
        .iter()
        .enumerate()
        .map(|(i, ts)| {
            ClassicalNoiseTrace::new(
                mix_seed(traj_seed, i as u64),
                sched.noise_resample.unwrap_or(1.0),
                ts.lo,
                ts.hi,
            )
        })
        .collect::<Result<_>>()?;

    let mut psi = spec.initial_state.clone();
    let mut scratch = Array1::<C64>::zeros(d);
    let mut cache = PropagatorCache::new();
    let mut photons = PhotonRecord::new(n_channels);
    let mut photon_since = vec![false; n_channels];

    let n_samples = comp.sample_steps.len();
    let mut rec = TrajectoryRecord {
        seed_index,
        sample_times: comp.sample_times.clone(),
        fidelity: Vec::with_capacity(n_samples),
        survival: Vec::with_capacity(n_samples),
        code_pop: Vec::with_capacity(n_samples),
        utility_pop: Vec::with_capacity(n_samples),
        code_state_pops: vec![Vec::with_capacity(n_samples); spec.code.states.len()],
        photon_counts: vec![0; n_channels],
        final_state: spec.initial_state.clone(),
    };
    let mut sample_ptr = 0usize;
    let mut forced_ptr = 0usize;

    let sample =
        |psi: &QuantumState, idx: usize, rec: &mut TrajectoryRecord| {
            let r = &reference.states[idx];
            rec.fidelity.push(r.inner(psi).norm_sqr());
            rec.survival.push(reference.psi0.inner(psi).norm_sqr());
            let mut code = 0.0;
            for (w, (_, c)) in spec.code.states.iter().enumerate() {
                let p = c.inner(psi).norm_sqr();
                rec.code_state_pops[w].push(p);
                code += p;
            }
            rec.code_pop.push(code);
            let util: f64 = spec
                .code
                .utility
                .iter()
                .map(|(_, u)| u.inner(psi).norm_sqr())
                .sum();
            rec.utility_pop.push(util);
        };

    // Boundary 0: preparation, forced events at t = 0, sampling.
    if let Some(prep) = &shared.prep_pulse {
        psi = prep.apply(&psi);
    }
    while forced_ptr < forced.len() && forced[forced_ptr].0 == 0 {
        match &forced[forced_ptr].1 {
            ForcedEventKind::Jump { channel } => {
                psi = spec.channels[*channel].apply_jump(&psi)?;
                photons.record(*channel);
                photon_since[*channel] = true;
            }
            ForcedEventKind::Unitary { op } => psi = op.apply(&psi),
        }
        forced_ptr += 1;
    }
    if comp.n_steps == 0 {
        if let Some(analyze) = &shared.analyze_pulse {
            psi = analyze.apply(&psi);
        }
    }
    if sample_ptr < n_samples && comp.sample_steps[0] == 0 {
        sample(&psi, 0, &mut rec);
        sample_ptr = 1;
    }

    let n_terms = spec.terms.len();
    let mut coeffs = vec![0.0f64; n_terms];
    let mut varying = Vec::new();

    for step in 0..comp.n_steps {
        // 1. Coherent step with midpoint coefficients.
        let u = match &shared.static_u {
            Some(u) => u.clone(),
            None => {
                let t_mid = (step as f64 + 0.5) * sched.dt;
                varying.clear();
                for (k, term) in spec.terms.iter().enumerate() {
                    coeffs[k] = match term.profile {
                        CoefficientProfile::Static(c) => c,
                        CoefficientProfile::Cosine { amp, omega, phase } => {
                            let c = amp * (omega * t_mid + phase).cos();
                            varying.push(c);
                            c
                        }
                        CoefficientProfile::Noise { trace_index } => {
                            let c = traces[trace_index].value_at(t_mid);
                            varying.push(c);
                            c
                        }
                    };
                }
                cache.get_or_build(spec, &coeffs, &varying, sched.dt)?
            }
        };
        apply_matrix(&u, &mut psi, &mut scratch);

        let boundary = step + 1;

        // 2. Jump stage: forced jumps at this boundary replace the draw.
        let forced_here_start = forced_ptr;
        while forced_ptr < forced.len() && forced[forced_ptr].0 == boundary {
            forced_ptr += 1;
        }
        let forced_here = &forced[forced_here_start..forced_ptr];
        let has_forced_jump = forced_here
            .iter()
            .any(|(_, k)| matches!(k, ForcedEventKind::Jump { .. }));
        if has_forced_jump {
            for (_, kind) in forced_here {
                if let ForcedEventKind::Jump { channel } = kind {
                    psi = spec.channels[*channel].apply_jump(&psi)?;
                    photons.record(*channel);
                    photon_since[*channel] = true;
                }
            }
        } else if n_channels > 0 {
            let draw: f64 = rng.random();
            let mut acc = 0.0;
            let mut fired = None;
            for (c, kernel) in shared.kernels.iter().enumerate() {
                acc += sched.dt * kernel.weight(&psi);
                if draw < acc {
                    fired = Some(c);
                    break;
                }
            }
            match fired {
                Some(c) => {
                    psi = spec.channels[c].apply_jump(&psi)?;
                    photons.record(c);
                    photon_since[c] = true;
                }
                None => {
                    let drift = shared.drift.as_ref().unwrap();
                    apply_matrix(&drift.mat, &mut psi, &mut scratch);
                    psi.normalize_in_place()?;
                }
            }
        }

        // 3. Forced unitaries at this boundary.
        for (_, kind) in forced_here {
            if let ForcedEventKind::Unitary { op } = kind {
                psi = op.apply(&psi);
            }
        }

        // 4. Decoupling pulse at odd half-periods.
        if let Some(h) = comp.dd_half_steps {
            if boundary % (2 * h) == h {
                psi = spec.dd_swap.as_ref().unwrap().apply(&psi);
            }
        }

        // 5. Correction cycle.
        if let Some(k) = comp.ec_every {
            if boundary % k == 0 {
                psi = run_ec_cycle(&spec.ec, psi, &mut rng, &photon_since)?;
                photon_since.fill(false);
            }
        }

        // 6. Analysis pulse at the final boundary.
        if boundary == comp.n_steps {
            if let Some(analyze) = &shared.analyze_pulse {
                psi = analyze.apply(&psi);
            }
        }

        // 7. Sampling.
        if sample_ptr < n_samples && comp.sample_steps[sample_ptr] == boundary {
            sample(&psi, sample_ptr, &mut rec);
            sample_ptr += 1;
        }
    }

    rec.photon_counts = photons.counts;
    rec.final_state = psi;
    Ok(rec)
}

fn sort_forced(
    spec: &ProtocolSpec,
    sched: &Schedule,
    comp: &Compiled,
    events: &[ForcedEvent],
) -> Result<Vec<(usize, ForcedEventKind)>> {
    let mut out = Vec::with_capacity(events.len());
    for ev in events {
        let step = snap_to_grid(ev.time, sched.dt, comp.n_steps, "forced event time")?;
        if let ForcedEventKind::Jump { channel } = ev.kind {
            if channel >= spec.channels.len() {
                return Err(QecError::ProtocolInvalid(format!(
                    "forced jump on channel {channel}, but the protocol has \
                     only {} channels",
                    spec.channels.len()
                )));
            }
        }
        out.push((step, ev.kind.clone()));
    }
    out.sort_by_key(|(s, _)| *s); // stable: preserves caller order per step
    Ok(out)
}

/// Run a single trajectory. `seed_index` selects the trajectory's stream
/// from the master seed exactly as [`run_ensemble`] does.
pub fn run_trajectory(
    spec: &ProtocolSpec,
    sched: &Schedule,
    master_seed: u64,
    seed_index: u64,
) -> Result<TrajectoryRecord> {
    run_trajectory_forced(spec, sched, master_seed, seed_index, &[])
}

/// Run a single trajectory with deterministically injected events.
pub fn run_trajectory_forced(
    spec: &ProtocolSpec,
    sched: &Schedule,
    master_seed: u64,
    seed_index: u64,
    events: &[ForcedEvent],
) -> Result<TrajectoryRecord> {
    let comp = compile(spec, sched)?;
    let shared = build_shared(spec, sched)?;
    let reference = compute_reference(spec, sched, &comp, &shared)?;
    let forced = sort_forced(spec, sched, &comp, events)?;
    run_one(
        spec, sched, &comp, &shared, &reference, master_seed, seed_index, &forced,
    )
}

/// The noiseless, dissipation-free, uncorrected reference run (pulse train
/// and analysis pulses included) as a trajectory record.
pub fn run_reference(spec: &ProtocolSpec, sched: &Schedule) -> Result<TrajectoryRecord> {
    let comp = compile(spec, sched)?;
    let shared = build_shared(spec, sched)?;
    let reference = compute_reference(spec, sched, &comp, &shared)?;
    let n_samples = comp.sample_steps.len();
    let mut rec = TrajectoryRecord {
        seed_index: u64::MAX,
        sample_times: comp.sample_times.clone(),
        fidelity: vec![1.0; n_samples],
        survival: Vec::with_capacity(n_samples),
        code_pop: Vec::with_capacity(n_samples),
        utility_pop: Vec::with_capacity(n_samples),
        code_state_pops: vec![Vec::with_capacity(n_samples); spec.code.states.len()],
        photon_counts: vec![0; spec.channels.len()],
        final_state: reference.final_state.clone(),
    };
    for psi in &reference.states {
        rec.survival.push(reference.psi0.inner(psi).norm_sqr());
        let mut code = 0.0;
        for (w, (_, c)) in spec.code.states.iter().enumerate() {
            let p = c.inner(psi).norm_sqr();
            rec.code_state_pops[w].push(p);
            code += p;
        }
        rec.code_pop.push(code);
        rec.utility_pop.push(
            spec.code
                .utility
                .iter()
                .map(|(_, u)| u.inner(psi).norm_sqr())
                .sum(),
        );
    }
    Ok(rec)
}

/// Run an ensemble and map each trajectory record through `f` (in seed
/// order). Trajectories are independent and run in parallel; the result
/// order and values are identical for any worker count.
pub fn run_ensemble_map<T, F>(
    spec: &ProtocolSpec,
    sched: &Schedule,
    n_traj: usize,
    master_seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(TrajectoryRecord) -> T + Sync,
{
    let comp = compile(spec, sched)?;
    let shared = build_shared(spec, sched)?;
    let reference = compute_reference(spec, sched, &comp, &shared)?;
    (0..n_traj)
        .into_par_iter()
        .map(|i| {
            run_one(
                spec,
                sched,
                &comp,
                &shared,
                &reference,
                master_seed,
                i as u64,
                &[],
            )
            .map(&f)
        })
        .collect()
}

/// Run an ensemble of trajectories and reduce to per-sample statistics.
pub fn run_ensemble(
    spec: &ProtocolSpec,
    sched: &Schedule,
    n_traj: usize,
    master_seed: u64,
) -> Result<EnsembleStats> {
    let records = run_ensemble_map(spec, sched, n_traj, master_seed, |r| r)?;
    let comp = compile(spec, sched)?;
    Ok(fold_records(spec, &comp.sample_times, &records))
}

/// Streaming per-slot mean/variance (Welford), stable when the spread is
/// tiny compared to the mean.
struct Accumulator {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Accumulator {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn add(&mut self, values: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for (i, &v) in values.iter().enumerate() {
            let delta = v - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (v - self.mean[i]);
        }
    }

    fn finish(self) -> SeriesStats {
        let n = self.n as f64;
        let stderr: Vec<f64> = self
            .m2
            .iter()
            .map(|&m2| {
                if self.n < 2 {
                    0.0
                } else {
                    (m2.max(0.0) / (n - 1.0) / n).sqrt()
                }
            })
            .collect();
        SeriesStats {
            mean: self.mean,
            stderr,
        }
    }
}

fn fold_records(
    spec: &ProtocolSpec,
    sample_times: &[f64],
    records: &[TrajectoryRecord],
) -> EnsembleStats {
    let len = sample_times.len();
    let n_words = spec.code.states.len();
    let n_channels = spec.channels.len();
    let mut fid = Accumulator::new(len);
    let mut srv = Accumulator::new(len);
    let mut code = Accumulator::new(len);
    let mut util = Accumulator::new(len);
    let mut words: Vec<Accumulator> = (0..n_words).map(|_| Accumulator::new(len)).collect();
    let mut photons = Accumulator::new(n_channels);
    let mut counts_buf = vec![0.0f64; n_channels];
    for r in records {
        fid.add(&r.fidelity);
        srv.add(&r.survival);
        code.add(&r.code_pop);
        util.add(&r.utility_pop);
        for (w, acc) in words.iter_mut().enumerate() {
            acc.add(&r.code_state_pops[w]);
        }
        for (i, &c) in r.photon_counts.iter().enumerate() {
            counts_buf[i] = c as f64;
        }
        photons.add(&counts_buf);
    }
    let photons = photons.finish();
    EnsembleStats {
        n_traj: records.len(),
        sample_times: sample_times.to_vec(),
        fidelity: fid.finish(),
        survival: srv.finish(),
        code_pop: code.finish(),
        utility_pop: util.finish(),
        code_state_pops: words.into_iter().map(|a| a.finish()).collect(),
        photon_counts: photons
            .mean
            .iter()
            .zip(photons.stderr.iter())
            .map(|(&mean, &stderr)| ScalarStats { mean, stderr })
            .collect(),
    }
}
