//! Protocol definitions: code spaces, sensing Hamiltonians, dissipation
//! channels, error-correction decision trees and ideal reference signals.
//!
//! Each protocol constructor returns a [`ProtocolSpec`], an immutable value
//! the trajectory engine can execute. Correction unitaries are never written
//! down as matrices by hand: they are generated from the images of the code
//! states under the relevant jump operator or sector projector
//! ([`correction_from_op`]), which reproduces all required relative signs
//! automatically and extends to a full unitary by Gram–Schmidt completion.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{QecError, Result};
use crate::hilbert::{
    unitary_from_pairs, HilbertLayout, Operator, QuantumState, C64,
};
use crate::noise::JumpChannel;

mod both_decay;
mod classical_drive;
mod eight_qubit;
mod flipflop;
mod interaction;
mod ms;
mod multilevel;
mod pulsed_dd;
mod raman;
mod ramsey_flipflop;
mod sideband;
mod superradiance;

pub use both_decay::make_both_decay_protocol;
pub use classical_drive::make_classical_drive_protocol;
pub use eight_qubit::make_eight_qubit_demo;
pub use flipflop::make_flipflop_protocol;
pub use interaction::make_interaction_protocol;
pub use ms::make_ms_protocol;
pub use multilevel::make_multilevel_protocol;
pub use pulsed_dd::{make_pulsed_dd_protocol, natural_pulse_period};
pub use raman::make_raman_t1_protocol;
pub use ramsey_flipflop::make_ramsey_flipflop_protocol;
pub use sideband::make_sideband_protocol;
pub use superradiance::make_superradiance_protocol;

/// Shared parameter record. Every protocol reads the subset it needs;
/// scheme-specific constants go through `extra` (each constructor validates
/// the keys it accepts).
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolParams {
    /// Sensing signal amplitude.
    pub g: f64,
    /// Decay rate of the lossy component(s), Γ = 1/T1.
    pub gamma: f64,
    /// Drive amplitude (Ω, or the strong leg of a Raman pair).
    pub omega: f64,
    /// Detuning (δ, or the gap Δ to an intermediate level).
    pub delta: f64,
    /// Energy gap of the protected ancilla qubit (ν).
    pub nu: f64,
    /// Lamb–Dicke / sideband strength scale (η).
    pub eta: f64,
    /// Gap between the collective decay eigenstates (superradiance scheme).
    pub omega_g: f64,
    /// Uniform range of the classical control-noise traces; protocols that
    /// use classical noise default this to (-g/2, g/2).
    pub noise_range: Option<(f64, f64)>,
    /// Scheme-specific constants keyed by name.
    pub extra: BTreeMap<String, f64>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            g: 1.0,
            gamma: 1.0,
            omega: 0.0,
            delta: 0.0,
            nu: 0.0,
            eta: 1.0,
            omega_g: 0.0,
            noise_range: None,
            extra: BTreeMap::new(),
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("g", self.g),
            ("gamma", self.gamma),
            ("omega", self.omega),
            ("delta", self.delta),
            ("nu", self.nu),
            ("eta", self.eta),
            ("omega_g", self.omega_g),
        ] {
            if !v.is_finite() {
                return Err(QecError::ProtocolInvalid(format!(
                    "parameter '{name}' must be finite, got {v}"
                )));
            }
        }
        if self.gamma < 0.0 {
            return Err(QecError::ProtocolInvalid(
                "decay rate gamma must be non-negative".into(),
            ));
        }
        if let Some((lo, hi)) = self.noise_range {
            if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
                return Err(QecError::ProtocolInvalid(format!(
                    "noise_range ({lo}, {hi}) is not a valid interval"
                )));
            }
        }
        Ok(())
    }

    pub fn extra_or(&self, key: &str, default: f64) -> f64 {
        self.extra.get(key).copied().unwrap_or(default)
    }

    pub(crate) fn check_extra_keys(&self, allowed: &[&str], protocol: &str) -> Result<()> {
        for key in self.extra.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(QecError::ProtocolInvalid(format!(
                    "unknown extra parameter '{key}' for protocol '{protocol}' \
                     (accepted: {allowed:?})"
                )));
            }
        }
        Ok(())
    }

    /// Noise range with the conventional default of (-g/2, g/2).
    pub(crate) fn noise_range_or_default(&self) -> (f64, f64) {
        self.noise_range
            .unwrap_or((-self.g.abs() / 2.0, self.g.abs() / 2.0))
    }
}

/// Asserts the perturbative regime for schemes whose sensing transit runs
/// through an off-resonantly coupled intermediate level.
pub(crate) fn require_perturbative(coupling: f64, gap: f64, what: &str) -> Result<()> {
    if coupling == 0.0 {
        return Ok(());
    }
    if gap == 0.0 || (coupling / gap).abs() > 0.2 {
        return Err(QecError::ProtocolInvalid(format!(
            "{what}: coupling/gap ratio {:.3} exceeds the perturbative bound 0.2",
            if gap == 0.0 { f64::INFINITY } else { (coupling / gap).abs() }
        )));
    }
    Ok(())
}

/// Logical code basis plus (optionally) the intermediate "utility" states a
/// scheme populates at O(ε).
#[derive(Clone, Debug)]
pub struct CodeSpec {
    pub layout: Arc<HilbertLayout>,
    pub states: Vec<(String, QuantumState)>,
    pub utility: Vec<(String, QuantumState)>,
}

impl CodeSpec {
    pub fn new(
        layout: &Arc<HilbertLayout>,
        states: Vec<(String, QuantumState)>,
        utility: Vec<(String, QuantumState)>,
    ) -> Result<Self> {
        let all: Vec<&(String, QuantumState)> = states.iter().chain(utility.iter()).collect();
        for (i, (na, a)) in all.iter().enumerate() {
            for (j, (nb, b)) in all.iter().enumerate() {
                let ip = a.inner(b);
                let target = if i == j { 1.0 } else { 0.0 };
                if (ip.norm() - target).abs() > 1e-10 {
                    return Err(QecError::ProtocolInvalid(format!(
                        "code/utility states '{na}' and '{nb}' are not orthonormal: \
                         |⟨{na}|{nb}⟩| = {}",
                        ip.norm()
                    )));
                }
            }
        }
        Ok(CodeSpec {
            layout: layout.clone(),
            states,
            utility,
        })
    }

    pub fn state(&self, idx: usize) -> &QuantumState {
        &self.states[idx].1
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }
}

/// A set of error operators checked together against the recoverability
/// condition. `labeled` marks sets whose members deposit their emitted
/// quantum into mutually orthogonal environment states (distinct photon
/// frequencies), which removes the cross conditions between different
/// members.
#[derive(Clone, Debug)]
pub struct ErrorSet {
    pub name: String,
    pub labeled: bool,
    pub ops: Vec<(String, Operator)>,
    pub expect_correctable: bool,
}

/// Verdict for one operator of an [`ErrorSet`].
#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub name: String,
    pub correctable: bool,
    pub distinguishable_from_signal: bool,
    /// Largest deviation of a code-block matrix ⟨c_a|E_i†E_j|c_b⟩ from a
    /// multiple of the identity, over all checked pairs involving this
    /// operator.
    pub violation_norm: f64,
}

#[derive(Clone, Debug)]
pub struct CorrectabilityReport {
    pub set_name: String,
    pub correctable: bool,
    pub max_violation: f64,
    pub errors: Vec<ErrorReport>,
}

const CORRECTABILITY_TOL: f64 = 1e-8;

/// Recoverability check: an error set {E_i} is correctable on a code with
/// projector P iff every P E_i†E_j P is proportional to P. The check is
/// evaluated blockwise as M_ab = ⟨c_a|E_i†E_j|c_b⟩ and the reported
/// violation is ‖M − (tr M / n) I‖_F. For labeled sets the i≠j conditions
/// are dropped: orthogonal environment states decohere the cross terms.
pub fn check_correctability(code: &CodeSpec, set: &ErrorSet) -> CorrectabilityReport {
    let n = code.n_states();
    let images: Vec<Vec<QuantumState>> = set
        .ops
        .iter()
        .map(|(_, e)| code.states.iter().map(|(_, c)| e.apply(c)).collect())
        .collect();

    let mut per_error = vec![0.0f64; set.ops.len()];
    for i in 0..set.ops.len() {
        for j in i..set.ops.len() {
            if set.labeled && i != j {
                continue;
            }
            // M_ab = ⟨E_i c_a | E_j c_b⟩
            let mut trace = C64::new(0.0, 0.0);
            let mut m = vec![vec![C64::new(0.0, 0.0); n]; n];
            for a in 0..n {
                for b in 0..n {
                    m[a][b] = images[i][a].inner(&images[j][b]);
                }
                trace += m[a][a];
            }
            let mean = trace / n as f64;
            let mut frob = 0.0f64;
            for (a, row) in m.iter().enumerate() {
                for (b, &v) in row.iter().enumerate() {
                    let dev = if a == b { v - mean } else { v };
                    frob += dev.norm_sqr();
                }
            }
            let violation = frob.sqrt();
            per_error[i] = per_error[i].max(violation);
            per_error[j] = per_error[j].max(violation);
        }
    }

    let errors: Vec<ErrorReport> = set
        .ops
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            let mut distinguish = 0.0f64;
            for a in 0..n {
                for b in 0..n {
                    distinguish = distinguish.max(code.state(a).inner(&images[i][b]).norm());
                }
            }
            ErrorReport {
                name: name.clone(),
                correctable: per_error[i] < CORRECTABILITY_TOL,
                distinguishable_from_signal: distinguish < CORRECTABILITY_TOL,
                violation_norm: per_error[i],
            }
        })
        .collect();

    let max_violation = per_error.iter().cloned().fold(0.0, f64::max);
    CorrectabilityReport {
        set_name: set.name.clone(),
        correctable: max_violation < CORRECTABILITY_TOL,
        max_violation,
        errors,
    }
}

/// Decision tree executed at each error-correction boundary. Projective
/// measurements branch on the observed eigenvalue; corrections apply a
/// unitary; photon-conditioned branches consult which channels have fired
/// since the previous cycle (classical detector records).
#[derive(Clone, Debug)]
pub enum EcNode {
    Accept,
    Measure {
        observable: Arc<Operator>,
        /// (eigenvalue, branch) pairs matched within 1e-6.
        arms: Vec<(f64, EcNode)>,
        otherwise: Box<EcNode>,
    },
    Correct {
        op: Arc<Operator>,
        then: Box<EcNode>,
    },
    IfPhotonSince {
        channels: Vec<usize>,
        then: Box<EcNode>,
        else_: Box<EcNode>,
    },
}

impl EcNode {
    pub fn measure(observable: Operator, arms: Vec<(f64, EcNode)>) -> EcNode {
        EcNode::Measure {
            observable: Arc::new(observable),
            arms,
            otherwise: Box::new(EcNode::Accept),
        }
    }

    pub fn correct(op: Operator) -> EcNode {
        EcNode::Correct {
            op: Arc::new(op),
            then: Box::new(EcNode::Accept),
        }
    }
}

/// Time profile of one Hamiltonian term; the engine evaluates the
/// coefficient at each step midpoint.
#[derive(Clone, Debug)]
pub enum CoefficientProfile {
    Static(f64),
    Cosine { amp: f64, omega: f64, phase: f64 },
    /// Coefficient read from classical noise trace `trace_index`.
    Noise { trace_index: usize },
}

#[derive(Clone, Debug)]
pub struct HamiltonianTerm {
    pub op: Arc<Operator>,
    pub profile: CoefficientProfile,
}

impl HamiltonianTerm {
    pub fn fixed(coeff: f64, op: Operator) -> Self {
        HamiltonianTerm {
            op: Arc::new(op),
            profile: CoefficientProfile::Static(coeff),
        }
    }
}

/// Declared uniform range for one classical noise trace.
#[derive(Clone, Copy, Debug)]
pub struct NoiseTraceSpec {
    pub lo: f64,
    pub hi: f64,
}

/// Closed-form reference signal, where the underlying analysis provides one.
#[derive(Clone, Copy, Debug)]
pub enum IdealSignal {
    /// Survival probability cos²(ω t / 2) of the prepared superposition.
    SurvivalCos2 { omega: f64 },
    /// Population sin²(ω t / 2) transferred into the target code state.
    TransferSin2 { omega: f64 },
    /// Echo-rectified relative phase rate: survival cos²(rate·t / 2),
    /// exact at pulse-period boundaries.
    PhaseRamp { rate: f64 },
    /// Ramsey fringe cos²(δ t / 2) in the analysis population.
    RamseyCos2 { delta: f64 },
}

impl IdealSignal {
    pub fn eval(&self, t: f64) -> f64 {
        let half = |w: f64| (w * t / 2.0).cos().powi(2);
        match *self {
            IdealSignal::SurvivalCos2 { omega } => half(omega),
            IdealSignal::TransferSin2 { omega } => 1.0 - half(omega),
            IdealSignal::PhaseRamp { rate } => half(rate),
            IdealSignal::RamseyCos2 { delta } => half(delta),
        }
    }

    /// Period of the signal (cos²/sin² repeat when their argument advances
    /// by π). `None` for a frequency of zero.
    pub fn period(&self) -> Option<f64> {
        let w = match *self {
            IdealSignal::SurvivalCos2 { omega } | IdealSignal::TransferSin2 { omega } => omega,
            IdealSignal::PhaseRamp { rate } => rate,
            IdealSignal::RamseyCos2 { delta } => delta,
        };
        (w != 0.0).then(|| 2.0 * std::f64::consts::PI / w.abs())
    }
}

/// Which recorded observable the ideal signal describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalObservable {
    /// |⟨ψ(0)|ψ(t)⟩|².
    Survival,
    /// Population of the indexed code state.
    CodePop(usize),
}

/// Ramsey pulse pair for protocols read out interferometrically: `pulse(φ)`
/// is the logical π/2 rotation with drive phase φ; the engine applies
/// `pulse(0)` at t = 0 and `pulse(carrier · T)` at the end of the run.
pub struct RamseyScheme {
    pub carrier: f64,
    pub pulse: Arc<dyn Fn(f64) -> Operator + Send + Sync>,
}

impl Clone for RamseyScheme {
    fn clone(&self) -> Self {
        RamseyScheme {
            carrier: self.carrier,
            pulse: self.pulse.clone(),
        }
    }
}

impl std::fmt::Debug for RamseyScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RamseyScheme(carrier {})", self.carrier)
    }
}

/// A complete, immutable scheme definition consumed by the engine.
#[derive(Clone, Debug)]
pub struct ProtocolSpec {
    pub name: String,
    pub layout: Arc<HilbertLayout>,
    pub code: CodeSpec,
    pub initial_state: QuantumState,
    pub terms: Vec<HamiltonianTerm>,
    pub channels: Vec<JumpChannel>,
    pub ec: EcNode,
    /// Pulse applied at dynamical-decoupling boundaries, if the scheme uses
    /// a pulse train.
    pub dd_swap: Option<Arc<Operator>>,
    pub ramsey: Option<RamseyScheme>,
    pub noise_traces: Vec<NoiseTraceSpec>,
    pub ideal_signal: IdealSignal,
    pub signal_observable: SignalObservable,
    pub error_sets: Vec<ErrorSet>,
    pub params: ProtocolParams,
}

impl ProtocolSpec {
    /// Channel index by label.
    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.label == label)
    }
}

pub const PROTOCOL_NAMES: &[&str] = &[
    "classical_drive",
    "interaction",
    "pulsed_dd",
    "raman_t1",
    "flipflop",
    "ramsey_flipflop",
    "sideband",
    "ms",
    "superradiance",
    "multilevel",
    "both_decay",
    "eight_qubit_demo",
];

/// Build a protocol by registry name.
pub fn build_protocol(name: &str, params: &ProtocolParams) -> Result<ProtocolSpec> {
    params.validate()?;
    match name {
        "classical_drive" => make_classical_drive_protocol(params),
        "interaction" => make_interaction_protocol(params),
        "pulsed_dd" => make_pulsed_dd_protocol(params),
        "raman_t1" => make_raman_t1_protocol(params),
        "flipflop" => make_flipflop_protocol(params),
        "ramsey_flipflop" => make_ramsey_flipflop_protocol(params),
        "sideband" => make_sideband_protocol(params),
        "ms" => make_ms_protocol(params),
        "superradiance" => make_superradiance_protocol(params),
        "multilevel" => make_multilevel_protocol(params),
        "both_decay" => make_both_decay_protocol(params),
        "eight_qubit_demo" => make_eight_qubit_demo(params),
        other => Err(QecError::ProtocolInvalid(format!(
            "unknown protocol '{other}'; available: {}",
            PROTOCOL_NAMES.join(", ")
        ))),
    }
}

// ---------------------------------------------------------------------------
// Shared construction helpers.
// ---------------------------------------------------------------------------

/// Normalized real-amplitude superposition over computational basis states.
pub fn real_superposition(
    layout: &Arc<HilbertLayout>,
    terms: &[(f64, &[usize])],
) -> Result<QuantumState> {
    let cx: Vec<(C64, &[usize])> = terms
        .iter()
        .map(|&(a, lv)| (C64::new(a, 0.0), lv))
        .collect();
    QuantumState::superposition(layout, &cx)?.normalized()
}

/// Equal superposition (a + b)/√2 of two states.
pub fn equal_mix(a: &QuantumState, b: &QuantumState) -> Result<QuantumState> {
    a.add(b).normalized()
}

///// The unitary correction associated with an error route: for each target
/// state (code states, plus utility states where applicable) the image
/// `m · target` is normalized and mapped back onto the target. Relative
/// phases of the images are preserved, so the signs demanded by each
/// scheme's correction table come out automatically. Targets annihilated by
/// `m` are skipped.
pub fn correction_from_op(
    layout: &Arc<HilbertLayout>,
    m: &Operator,
    targets: &[&QuantumState],
) -> Result<Operator> {
    let mut pairs = Vec::new();
    for &t in targets {
        let img = m.apply(t);
        if img.norm() > 1e-9 {
            pairs.push((img.normalized()?, t.clone()));
        }
    }
    if pairs.is_empty() {
        return Err(QecError::ProtocolInvalid(
            "correction operator annihilates every target state".into(),
        ));
    }
    unitary_from_pairs(layout, &pairs)
}

/// Product observable of single-factor σz operators on the listed factors,
/// e.g. the spin-correlation syndromes.
pub fn zz_observable(
    layout: &Arc<HilbertLayout>,
    factors: &[usize],
) -> Result<Operator> {
    use crate::hilbert::sigma_z;
    let mut local = sigma_z();
    for _ in 1..factors.len() {
        local = ndarray::linalg::kron(&local, &sigma_z());
    }
    Operator::embed(layout, &local, factors)
}

/// Hermitian operator |a⟩⟨b| + |b⟩⟨a| scaled by `coeff`.
pub fn coupling_term(
    coeff: f64,
    a: &QuantumState,
    b: &QuantumState,
) -> Result<Operator> {
    let fwd = Operator::outer(a, b);
    let sum = fwd.add(&fwd.adjoint()).scaled(C64::new(coeff, 0.0));
    Operator::hermitian_from_matrix(&a.layout, sum.mat)
}

/// Rank-one projector scaled by `coeff` (used for level shifts Δ|B⟩⟨B|).
pub fn shift_term(coeff: f64, s: &QuantumState) -> Result<Operator> {
    let p = Operator::projector(&[s])?;
    Operator::hermitian_from_matrix(&s.layout, p.scaled(C64::new(coeff, 0.0)).mat)
}

/// Projection of `bare` onto the dressed code span: the smallest union of
/// degenerate eigenspaces of the static part of `terms` that carries
/// essentially all (≥ 95%) of the code weight.
///
/// Protocols whose code words hybridize with an intermediate level start
/// trajectories here rather than in the bare word: the bare word contains an
/// O(coupling/gap) admixture of split-off eigenstates, which would make the
/// intermediate population slosh at the gap frequency. Projecting onto the
/// dressed span removes that ripple while keeping any slow logical beat
/// between (near-)degenerate dressed words — which is the sensing signal
/// itself. The global phase is fixed so ⟨bare|ψ⟩ is real positive.
pub fn dressed_state(
    layout: &Arc<HilbertLayout>,
    terms: &[HamiltonianTerm],
    code_words: &[&QuantumState],
    bare: &QuantumState,
) -> Result<QuantumState> {
    let mut h = Operator::zeros(layout);
    for term in terms {
        if let CoefficientProfile::Static(c) = term.profile {
            h = h.add(&term.op.scaled(C64::new(c, 0.0)));
        }
    }
    let h = Operator::hermitian_from_matrix(layout, h.mat)?;
    let e = h.eig()?;
    let d = layout.dim();

    // Weight of each eigenvector inside the bare code span.
    let overlap = |k: usize, s: &QuantumState| -> C64 {
        (0..d).map(|i| e.vectors[[i, k]].conj() * s.data[i]).sum()
    };
    // Score whole degenerate clusters rather than single eigenvectors: the
    // projector onto a cluster span is basis-independent, so an arbitrary
    // eigenbasis inside a degeneracy (including a fully degenerate H)
    // cannot skew the result.
    let mut scored: Vec<(f64, &Vec<usize>)> = e
        .clusters
        .iter()
        .map(|(_, members)| {
            let w = members
                .iter()
                .map(|&k| {
                    code_words
                        .iter()
                        .map(|c| overlap(k, c).norm_sqr())
                        .sum::<f64>()
                })
                .sum::<f64>();
            (w, members)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    // Take clusters until they carry essentially all of the code weight; a
    // near-degenerate code pair may sit in one cluster, a split pair in two.
    let needed = code_words.len() as f64 * 0.95;
    let mut top: Vec<usize> = Vec::new();
    let mut acc = 0.0;
    for (w, members) in &scored {
        top.extend(members.iter().copied());
        acc += w;
        if acc >= needed {
            break;
        }
    }

    let mut data = vec![C64::new(0.0, 0.0); d];
    for &k in &top {
        let amp = overlap(k, bare); // ⟨v_k|bare⟩
        for (i, v) in data.iter_mut().enumerate() {
            *v += e.vectors[[i, k]] * amp;
        }
    }
    let weight: f64 = data.iter().map(|c| c.norm_sqr()).sum();
    if weight < 0.5 {
        return Err(QecError::ProtocolInvalid(format!(
            "bare state has only weight {weight:.3} inside the dressed code \
             span; the scheme is outside its perturbative regime"
        )));
    }
    let mut psi = QuantumState::from_vec(layout, data)?.normalized()?;
    let ov = bare.inner(&psi); // ⟨bare|ψ⟩
    if ov.norm() > 1e-12 {
        let phase = ov.conj() / ov.norm();
        psi.data.mapv_inplace(|c| c * phase);
    }
    Ok(psi)
}
