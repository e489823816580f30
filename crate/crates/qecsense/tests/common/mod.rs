//! Independent density-matrix oracle for the trajectory engine.
//!
//! The stochastic engine averages pure-state trajectories; this module
//! computes the same ensemble means deterministically:
//!
//! * classical noise is averaged by Gauss–Legendre quadrature over each
//!   resample window (noise values are i.i.d. per window, so window maps
//!   compose),
//! * jump channels become the exact dissipative semigroup e^{L_D·dt} acting
//!   on the density matrix between the coherent steps, sharing the engine's
//!   unitary/dissipator splitting,
//! * correction cycles become projective instruments (sums over measurement
//!   branches) walking the same decision tree,
//! * photon-conditioned branches are handled by splitting the density
//!   matrix into sectors labeled by which channels have fired since the
//!   last cycle; the sector transfer maps come from an inclusion–exclusion
//!   over restricted semigroups and are exact.
//!
//! The only systematic engine/oracle difference left is the O((rate·dt)²)
//! per-step linearization bias of the jump unraveling; comparisons budget
//! for it explicitly.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use ndarray_linalg::Inverse;
use num_complex::Complex64 as C64;
use qecsense::engine::Schedule;
use qecsense::hilbert::Operator;
use qecsense::protocols::{CoefficientProfile, EcNode, ProtocolSpec, SignalObservable};
use std::collections::HashMap;
use std::sync::Arc;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

// ---------------------------------------------------------------------------
// Matrix exponential (Padé-13 with scaling and squaring)
// ---------------------------------------------------------------------------

fn one_norm(a: &Array2<C64>) -> f64 {
    let mut best = 0.0f64;
    for col in a.columns() {
        best = best.max(col.iter().map(|z| z.norm()).sum());
    }
    best
}

/// e^A for a general complex square matrix.
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    const THETA13: f64 = 5.371_920_351_148_152;
    const B: [f64; 14] = [
        64_764_752_532_480_000.0,
        32_382_376_266_240_000.0,
        7_771_770_303_897_600.0,
        1_187_353_796_428_800.0,
        129_060_195_264_000.0,
        10_559_470_521_600.0,
        670_442_572_800.0,
        33_522_128_640.0,
        1_323_241_920.0,
        40_840_800.0,
        960_960.0,
        16_380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.mapv(|z| z / 2f64.powi(s));
    let id: Array2<C64> = Array2::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let u_hi = a6.mapv(|z| z * B[13]) + &a4.mapv(|z| z * B[11]) + &a2.mapv(|z| z * B[9]);
    let u_lo = a6.mapv(|z| z * B[7]) + &a4.mapv(|z| z * B[5]) + &a2.mapv(|z| z * B[3])
        + &id.mapv(|z| z * B[1]);
    let u = a.dot(&(a6.dot(&u_hi) + &u_lo));
    let v_hi = a6.mapv(|z| z * B[12]) + &a4.mapv(|z| z * B[10]) + &a2.mapv(|z| z * B[8]);
    let v = a6.dot(&v_hi)
        + &a6.mapv(|z| z * B[6])
        + &a4.mapv(|z| z * B[4])
        + &a2.mapv(|z| z * B[2])
        + &id.mapv(|z| z * B[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut x = q.inv().expect("Padé denominator is singular").dot(&p);
    for _ in 0..s {
        x = x.dot(&x);
    }
    x
}

// ---------------------------------------------------------------------------
// Gauss–Legendre quadrature (16 nodes)
// ---------------------------------------------------------------------------

const GL16_NODES: [f64; 8] = [
    0.095_012_509_837_637_440_185,
    0.281_603_550_779_258_913_230,
    0.458_016_777_657_227_386_342,
    0.617_876_244_402_643_748_447,
    0.755_404_408_355_003_033_895,
    0.865_631_202_387_831_743_880,
    0.944_575_023_073_232_576_078,
    0.989_400_934_991_649_932_596,
];
const GL16_WEIGHTS: [f64; 8] = [
    0.189_450_610_455_068_496_285,
    0.182_603_415_044_923_588_867,
    0.169_156_519_395_002_538_189,
    0.149_595_988_816_576_732_081,
    0.124_628_971_255_533_872_052,
    0.095_158_511_682_492_784_810,
    0.062_253_523_938_647_892_863,
    0.027_152_459_411_754_094_852,
];

/// Nodes and probability weights for averaging a uniform variable on
/// [lo, hi]; weights sum to 1. A degenerate range yields a single node.
pub fn uniform_average_nodes(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    if hi == lo {
        return vec![(lo, 1.0)];
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut out = Vec::with_capacity(16);
    for (&x, &w) in GL16_NODES.iter().zip(GL16_WEIGHTS.iter()) {
        out.push((mid - half * x, 0.5 * w));
        out.push((mid + half * x, 0.5 * w));
    }
    out
}

// ---------------------------------------------------------------------------
// vec/unvec and superoperators (row-major stacking: vec(AρB) = (A⊗Bᵀ)vec ρ)
// ---------------------------------------------------------------------------

fn vec_of(rho: &Array2<C64>) -> Array1<C64> {
    Array1::from_iter(rho.iter().cloned())
}

fn mat_of(v: &Array1<C64>, d: usize) -> Array2<C64> {
    Array2::from_shape_vec((d, d), v.to_vec()).unwrap()
}

fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    ndarray::linalg::kron(a, b)
}

fn dagger(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

fn sandwich(u: &Array2<C64>, rho: &Array2<C64>) -> Array2<C64> {
    u.dot(rho).dot(&dagger(u))
}

/// Superoperator of ρ ↦ JρJ† scaled by `rate`.
fn jump_superop(j: &Array2<C64>, rate: f64) -> Array2<C64> {
    kron(j, &j.mapv(|z| z.conj())).mapv(|z| z * rate)
}

/// Superoperator of the anticommutator drift −½Σ rate{J†J, ρ}.
fn drift_superop(channels: &[(Array2<C64>, f64)]) -> Array2<C64> {
    let d = channels[0].0.nrows();
    let id: Array2<C64> = Array2::eye(d);
    let mut out = Array2::<C64>::zeros((d * d, d * d));
    for (j, rate) in channels {
        let k = dagger(j).dot(j);
        let left = kron(&k, &id);
        let right = kron(&id, &k.t().to_owned());
        out = out + (left + right).mapv(|z| z * (-0.5 * rate));
    }
    out
}

// ---------------------------------------------------------------------------
// Dissipator stage
// ---------------------------------------------------------------------------

enum Dissipator {
    /// Exact semigroup e^{L_D dt} on vec(ρ); density matrix kept whole.
    Whole(Array2<C64>),
    /// Sector transfer maps indexed by the fired-channel mask B: applying
    /// map B to a sector moves its contribution to `sector | B`. Exact
    /// inclusion–exclusion over the restricted semigroups.
    Sectored(Vec<Array2<C64>>),
}

fn ec_reads_photons(node: &EcNode) -> bool {
    match node {
        EcNode::Accept => false,
        EcNode::Measure {
            arms, otherwise, ..
        } => {
            arms.iter().any(|(_, n)| ec_reads_photons(n)) || ec_reads_photons(otherwise)
        }
        EcNode::Correct { then, .. } => ec_reads_photons(then),
        EcNode::IfPhotonSince { .. } => true,
    }
}

fn build_dissipator(spec: &ProtocolSpec, dt: f64) -> Option<Dissipator> {
    if spec.channels.is_empty() {
        return None;
    }
    let chans: Vec<(Array2<C64>, f64)> = spec
        .channels
        .iter()
        .map(|ch| (ch.op.mat.clone(), ch.rate))
        .collect();
    let drift = drift_superop(&chans);
    if !ec_reads_photons(&spec.ec) {
        let mut gen = drift;
        for (j, rate) in &chans {
            gen = gen + jump_superop(j, *rate);
        }
        return Some(Dissipator::Whole(expm(&gen.mapv(|z| z * dt))));
    }
    // Restricted semigroups F_A: only channels in A may fire.
    let m = chans.len();
    let mut f_maps: Vec<Array2<C64>> = Vec::with_capacity(1 << m);
    for mask in 0..(1usize << m) {
        let mut gen = drift.clone();
        for (ci, (j, rate)) in chans.iter().enumerate() {
            if mask >> ci & 1 == 1 {
                gen = gen + jump_superop(j, *rate);
            }
        }
        f_maps.push(expm(&gen.mapv(|z| z * dt)));
    }
    // G_B = Σ_{A⊆B} (−1)^{|B\A|} F_A: exactly the histories where every
    // channel in B fired at least once and no channel outside B fired.
    let mut g_maps: Vec<Array2<C64>> = Vec::with_capacity(1 << m);
    for b in 0..(1usize << m) {
        let mut g = Array2::<C64>::zeros(f_maps[0].raw_dim());
        let mut a = b;
        loop {
            let sign = if (b.count_ones() - a.count_ones()) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            g = g + f_maps[a].mapv(|z| z * sign);
            if a == 0 {
                break;
            }
            a = (a - 1) & b;
        }
        g_maps.push(g);
    }
    Some(Dissipator::Sectored(g_maps))
}

// ---------------------------------------------------------------------------
// Correction cycle as a projective instrument
// ---------------------------------------------------------------------------

const ARM_TOL: f64 = 1e-6;

/// Accumulate all Accept-terminated branches of the tree into `out`.
/// `mask` holds the fired-channel bits of the sector being processed.
fn ec_apply(node: &EcNode, mask: usize, rho: Array2<C64>, out: &mut Array2<C64>) {
    match node {
        EcNode::Accept => *out += &rho,
        EcNode::Measure {
            observable,
            arms,
            otherwise,
        } => {
            let e = observable.eig().expect("observable eig failed");
            let d = rho.nrows();
            for (value, members) in &e.clusters {
                let mut proj = Array2::<C64>::zeros((d, d));
                for &k in members {
                    let v = e.vectors.column(k);
                    for i in 0..d {
                        for j in 0..d {
                            proj[[i, j]] += v[i] * v[j].conj();
                        }
                    }
                }
                let branch = proj.dot(&rho).dot(&proj);
                let next = arms
                    .iter()
                    .find(|(ev, _)| (ev - value).abs() < ARM_TOL)
                    .map(|(_, n)| n)
                    .unwrap_or(otherwise);
                ec_apply(next, mask, branch, out);
            }
        }
        EcNode::Correct { op, then } => {
            ec_apply(then, mask, sandwich(&op.mat, &rho), out);
        }
        EcNode::IfPhotonSince {
            channels,
            then,
            else_,
        } => {
            let hit = channels.iter().any(|&ch| mask >> ch & 1 == 1);
            ec_apply(if hit { then } else { else_ }, mask, rho, out);
        }
    }
}

// ---------------------------------------------------------------------------
// Propagator assembly (identical splitting to the engine: the full
// Hamiltonian at midpoint coefficients is exponentiated in one step)
// ---------------------------------------------------------------------------

struct PropCache {
    map: HashMap<Vec<u64>, Arc<Array2<C64>>>,
}

impl PropCache {
    fn new() -> Self {
        PropCache {
            map: HashMap::new(),
        }
    }

    fn get(&mut self, spec: &ProtocolSpec, coeffs: &[f64], dt: f64) -> Arc<Array2<C64>> {
        let key: Vec<u64> = coeffs.iter().map(|c| c.to_bits()).collect();
        if let Some(u) = self.map.get(&key) {
            return u.clone();
        }
        let d = spec.layout.dim();
        let mut h = Array2::<C64>::zeros((d, d));
        for (term, &co) in spec.terms.iter().zip(coeffs) {
            if co != 0.0 {
                h.scaled_add(c(co, 0.0), &term.op.mat);
            }
        }
        let op = Operator::hermitian_from_matrix(&spec.layout, h).expect("non-hermitian sum");
        let u = Arc::new(op.propagator(dt).expect("propagator failed"));
        self.map.insert(key, u.clone());
        u
    }
}

fn step_coeffs(
    spec: &ProtocolSpec,
    step: usize,
    dt: f64,
    noise_values: &[f64],
    coeffs: &mut Vec<f64>,
) {
    let t_mid = (step as f64 + 0.5) * dt;
    coeffs.clear();
    for term in &spec.terms {
        coeffs.push(match term.profile {
            CoefficientProfile::Static(co) => co,
            CoefficientProfile::Cosine { amp, omega, phase } => {
                amp * (omega * t_mid + phase).cos()
            }
            CoefficientProfile::Noise { trace_index } => noise_values[trace_index],
        });
    }
}

// ---------------------------------------------------------------------------
// Oracle run
// ---------------------------------------------------------------------------

/// Ensemble means computed by the density oracle, shaped like the engine's
/// `EnsembleStats` series.
pub struct OracleRun {
    pub sample_times: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub survival: Vec<f64>,
    pub code_pop: Vec<f64>,
    pub utility_pop: Vec<f64>,
    pub code_state_pops: Vec<Vec<f64>>,
}

impl OracleRun {
    pub fn signal(&self, observable: SignalObservable) -> &Vec<f64> {
        match observable {
            SignalObservable::Survival => &self.survival,
            SignalObservable::CodePop(i) => &self.code_state_pops[i],
        }
    }
}

fn round_mult(span: f64, unit: f64, what: &str) -> usize {
    let k = (span / unit).round();
    assert!(
        k >= 1.0 && (k * unit - span).abs() <= 1e-9 * span.abs().max(1.0),
        "{what} {span} is not a positive multiple of {unit}"
    );
    k as usize
}

fn expect_in(v: &Array1<C64>, rho: &Array2<C64>) -> f64 {
    let rv = rho.dot(v);
    v.iter()
        .zip(rv.iter())
        .map(|(a, b)| (a.conj() * b).re)
        .sum()
}

/// Noiseless, dissipation-free, uncorrected evolution (pulse train and
/// analysis pulse included): the trajectory engine's reference frame.
fn oracle_reference(
    spec: &ProtocolSpec,
    sched: &Schedule,
    n_steps: usize,
    sample_steps: &[usize],
    dd_half: Option<usize>,
    prep: &Option<Array2<C64>>,
    analyze: &Option<Array2<C64>>,
) -> (Array1<C64>, Vec<Array1<C64>>) {
    let mut psi = spec.initial_state.data.clone();
    if let Some(p) = prep {
        psi = p.dot(&psi);
    }
    let psi0 = psi.clone();
    if n_steps == 0 {
        if let Some(a) = analyze {
            psi = a.dot(&psi);
        }
    }
    let mut states = Vec::with_capacity(sample_steps.len());
    if sample_steps.first() == Some(&0) {
        states.push(psi.clone());
    }
    let mut cache = PropCache::new();
    let mut coeffs = Vec::new();
    let zero_noise = vec![0.0; spec.noise_traces.len()];
    for step in 0..n_steps {
        step_coeffs(spec, step, sched.dt, &zero_noise, &mut coeffs);
        let u = cache.get(spec, &coeffs, sched.dt);
        psi = u.dot(&psi);
        let b = step + 1;
        if let Some(h) = dd_half {
            if b % (2 * h) == h {
                psi = spec.dd_swap.as_ref().unwrap().mat.dot(&psi);
            }
        }
        if b == n_steps {
            if let Some(a) = analyze {
                psi = a.dot(&psi);
            }
        }
        if sample_steps.contains(&b) {
            states.push(psi.clone());
        }
    }
    (psi0, states)
}

/// Deterministic ensemble means of the engine's stochastic scheme.
pub fn run_density_oracle(spec: &ProtocolSpec, sched: &Schedule) -> OracleRun {
    let d = spec.layout.dim();
    let dt = sched.dt;
    let n_steps = if sched.total_time == 0.0 {
        0
    } else {
        round_mult(sched.total_time, dt, "total time")
    };
    let mut sample_steps: Vec<usize> = sched
        .sample_times
        .iter()
        .map(|&t| ((t / dt).round() as usize).min(n_steps))
        .collect();
    sample_steps.sort_unstable();
    sample_steps.dedup();
    let sample_times: Vec<f64> = sample_steps.iter().map(|&s| s as f64 * dt).collect();
    let ec_every = sched
        .ec_interval
        .map(|iv| round_mult(iv, dt, "correction interval"));
    let dd_half = sched
        .dd_period
        .map(|p| round_mult(p / 2.0, dt, "pulse half-period"));

    let (prep, analyze) = match (&spec.ramsey, sched.apply_ramsey) {
        (Some(r), true) => (
            Some((r.pulse)(0.0).mat),
            Some((r.pulse)(r.carrier * sched.total_time).mat),
        ),
        _ => (None, None),
    };

    let (ref_psi0, ref_states) = oracle_reference(
        spec,
        sched,
        n_steps,
        &sample_steps,
        dd_half,
        &prep,
        &analyze,
    );

    let n_traces = spec.noise_traces.len();
    let win_steps = if n_traces == 0 {
        n_steps.max(1)
    } else {
        round_mult(
            sched.noise_resample.expect("noise_resample required"),
            dt,
            "noise resample interval",
        )
    };

    let diss = build_dissipator(spec, dt);
    let n_sectors = match &diss {
        Some(Dissipator::Sectored(_)) => 1 << spec.channels.len(),
        _ => 1,
    };

    // Sector 0 = "nothing fired since the last correction cycle".
    let mut psi_start = spec.initial_state.data.clone();
    if let Some(p) = &prep {
        psi_start = p.dot(&psi_start);
    }
    let mut rho0 = Array2::<C64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            rho0[[i, j]] = psi_start[i] * psi_start[j].conj();
        }
    }
    if n_steps == 0 {
        if let Some(a) = &analyze {
            rho0 = sandwich(a, &rho0);
        }
    }
    let mut sectors: Vec<Option<Array2<C64>>> = vec![None; n_sectors];
    sectors[0] = Some(rho0);

    let n_samples = sample_steps.len();
    let mut out = OracleRun {
        sample_times,
        fidelity: vec![0.0; n_samples],
        survival: vec![0.0; n_samples],
        code_pop: vec![0.0; n_samples],
        utility_pop: vec![0.0; n_samples],
        code_state_pops: vec![vec![0.0; n_samples]; spec.code.states.len()],
    };

    let record = |out: &mut OracleRun, idx: usize, weight: f64, sectors: &[Option<Array2<C64>>]| {
        for rho in sectors.iter().flatten() {
            out.fidelity[idx] += weight * expect_in(&ref_states[idx], rho);
            out.survival[idx] += weight * expect_in(&ref_psi0, rho);
            let mut code = 0.0;
            for (w, (_, cw)) in spec.code.states.iter().enumerate() {
                let p = expect_in(&cw.data, rho);
                out.code_state_pops[w][idx] += weight * p;
                code += p;
            }
            out.code_pop[idx] += weight * code;
            let util: f64 = spec
                .code
                .utility
                .iter()
                .map(|(_, u)| expect_in(&u.data, rho))
                .sum();
            out.utility_pop[idx] += weight * util;
        }
    };

    let mut next_sample = 0usize;
    if sample_steps.first() == Some(&0) {
        record(&mut out, 0, 1.0, &sectors);
        next_sample = 1;
    }

    let mut cache = PropCache::new();
    let mut coeffs = Vec::new();
    let mut win_start = 0usize;
    while win_start < n_steps {
        let win_end = (win_start + win_steps).min(n_steps);
        // Sample indices landing inside this window.
        let window_samples: Vec<(usize, usize)> = (next_sample..n_samples)
            .map(|i| (i, sample_steps[i]))
            .filter(|&(_, b)| b > win_start && b <= win_end)
            .collect();
        next_sample += window_samples.len();

        // Tensor quadrature over this window's independent noise values.
        let mut nodes: Vec<(Vec<f64>, f64)> = vec![(vec![], 1.0)];
        for tr in &spec.noise_traces {
            let grid = uniform_average_nodes(tr.lo, tr.hi);
            let mut bigger = Vec::with_capacity(nodes.len() * grid.len());
            for (vals, w) in &nodes {
                for &(x, wx) in &grid {
                    let mut v = vals.clone();
                    v.push(x);
                    bigger.push((v, w * wx));
                }
            }
            nodes = bigger;
        }

        let mut merged: Vec<Option<Array2<C64>>> = vec![None; n_sectors];
        for (noise_values, weight) in &nodes {
            let mut work = sectors.clone();
            for step in win_start..win_end {
                // 1. Coherent step at midpoint coefficients.
                step_coeffs(spec, step, dt, noise_values, &mut coeffs);
                let u = cache.get(spec, &coeffs, dt);
                for slot in work.iter_mut().flatten() {
                    *slot = sandwich(&u, slot);
                }
                let b = step + 1;
                // 2. Dissipation.
                match &diss {
                    None => {}
                    Some(Dissipator::Whole(e_d)) => {
                        for slot in work.iter_mut().flatten() {
                            *slot = mat_of(&e_d.dot(&vec_of(slot)), d);
                        }
                    }
                    Some(Dissipator::Sectored(g_maps)) => {
                        let mut moved: Vec<Option<Array2<C64>>> = vec![None; n_sectors];
                        for (mask_s, slot) in work.iter().enumerate() {
                            if let Some(rho) = slot {
                                let v = vec_of(rho);
                                for (mask_b, g) in g_maps.iter().enumerate() {
                                    let contrib = mat_of(&g.dot(&v), d);
                                    let target = mask_s | mask_b;
                                    match &mut moved[target] {
                                        Some(acc) => *acc += &contrib,
                                        None => moved[target] = Some(contrib),
                                    }
                                }
                            }
                        }
                        work = moved;
                    }
                }
                // 3. (No forced events in the averaged picture.)
                // 4. Decoupling pulse.
                if let Some(h) = dd_half {
                    if b % (2 * h) == h {
                        let swap = &spec.dd_swap.as_ref().unwrap().mat;
                        for slot in work.iter_mut().flatten() {
                            *slot = sandwich(swap, slot);
                        }
                    }
                }
                // 5. Correction cycle; photon flags reset → all sectors
                //    merge back into sector 0.
                if let Some(k) = ec_every {
                    if b % k == 0 {
                        let mut healed = Array2::<C64>::zeros((d, d));
                        for (mask, slot) in work.iter().enumerate() {
                            if let Some(rho) = slot {
                                ec_apply(&spec.ec, mask, rho.clone(), &mut healed);
                            }
                        }
                        work = vec![None; n_sectors];
                        work[0] = Some(healed);
                    }
                }
                // 6. Analysis pulse at the final boundary.
                if b == n_steps {
                    if let Some(a) = &analyze {
                        for slot in work.iter_mut().flatten() {
                            *slot = sandwich(a, slot);
                        }
                    }
                }
                // 7. Sampling (weighted partial sums; observables are
                //    linear, so per-node accumulation equals sampling the
                //    averaged state).
                for &(idx, bs) in &window_samples {
                    if bs == b {
                        record(&mut out, idx, *weight, &work);
                    }
                }
            }
            for (slot, acc) in work.into_iter().zip(merged.iter_mut()) {
                if let Some(rho) = slot {
                    let weighted = rho.mapv(|z| z * *weight);
                    match acc {
                        Some(m) => *m += &weighted,
                        None => *acc = Some(weighted),
                    }
                }
            }
        }
        sectors = merged;
        win_start = win_end;
    }
    out
}
