//! Noise ingredients: piecewise-constant classical noise traces and quantum
//! jump channels for stochastic wavefunction evolution.

use std::sync::Arc;

use crate::error::{QecError, Result};
use crate::hilbert::{Operator, QuantumState};

/// SplitMix64 step; used to derive decorrelated seeds and noise values from
/// a master seed without any sequential state.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Mix two u64s into a decorrelated stream seed.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x632be59bd9b4e019)))
}

/// Map a u64 to a double in [0, 1) with 53 random bits.
pub fn u64_to_unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// A classical noise trace: an i.i.d. sequence of values uniform in
/// [lo, hi], piecewise constant over windows of length `interval`.
///
/// Values are a pure function of (seed, window index), so the trace can be
/// evaluated at any time in any order and is identical across runs and
/// worker counts.
#[derive(Clone, Debug)]
pub struct ClassicalNoiseTrace {
    pub seed: u64,
    pub interval: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ClassicalNoiseTrace {
    pub fn new(seed: u64, interval: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(interval > 0.0) {
            return Err(QecError::ScheduleInvalid(
                "noise resample interval must be positive".into(),
            ));
        }
        if !(hi >= lo) {
            return Err(QecError::ProtocolInvalid(format!(
                "noise range [{lo}, {hi}] is empty"
            )));
        }
        Ok(ClassicalNoiseTrace { seed, interval, lo, hi })
    }

    /// Value of the trace in window `k` (constant over
    /// `[k*interval, (k+1)*interval)`).
    pub fn window_value(&self, k: u64) -> f64 {
        let u = u64_to_unit_f64(splitmix64(self.seed.wrapping_add(k.wrapping_mul(
            0x9e3779b97f4a7c15,
        ))));
        self.lo + (self.hi - self.lo) * u
    }

    /// Value of the trace at time `t` (t >= 0).
    pub fn value_at(&self, t: f64) -> f64 {
        let k = (t / self.interval).floor().max(0.0) as u64;
        self.window_value(k)
    }
}

/// A dissipative channel for the stochastic wavefunction method: collapse
/// operator `op` applied at rate `rate`, with the emitted quantum tagged by
/// `label` (distinct labels model distinguishable environments, e.g.
/// different emission frequencies).
#[derive(Clone, Debug)]
pub struct JumpChannel {
    pub label: String,
    pub op: Arc<Operator>,
    pub rate: f64,
}

impl JumpChannel {
    pub fn new(label: &str, op: Operator, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(QecError::ProtocolInvalid(format!(
                "jump rate for channel '{label}' must be finite and non-negative"
            )));
        }
        Ok(JumpChannel {
            label: label.to_string(),
            op: Arc::new(op),
            rate,
        })
    }

    /// Jump probability in a window of length `dt` given the current state:
    /// p = rate * dt * ‖J ψ‖².
    pub fn jump_probability(&self, state: &QuantumState, dt: f64) -> f64 {
        let jpsi = self.op.apply(state);
        self.rate * dt * jpsi.norm().powi(2)
    }

    /// Apply the collapse operator and renormalize. Errors if the channel
    /// annihilates the state (jump from a dark state).
    pub fn apply_jump(&self, state: &QuantumState) -> Result<QuantumState> {
        let mut jpsi = self.op.apply(state);
        let n = jpsi.norm();
        if n < 1e-12 {
            return Err(QecError::NumericalFault(format!(
                "jump channel '{}' applied to a dark state",
                self.label
            )));
        }
        jpsi.data.mapv_inplace(|c| c / n);
        Ok(jpsi)
    }
}

/// The deterministic no-jump drift matrix of the stochastic wavefunction
/// method for a window of length `dt`:
/// D = 1 - (dt/2) Σ_c rate_c J_c†J_c.
/// State-independent, so callers build it once per run; applying it must be
/// followed by renormalization. First-order accurate in dt, matching the
/// jump-sampling order.
pub fn no_jump_drift_operator(channels: &[JumpChannel], dt: f64) -> Result<Operator> {
    let layout = match channels.first() {
        Some(ch) => ch.op.layout.clone(),
        None => {
            return Err(QecError::ProtocolInvalid(
                "no-jump drift needs at least one channel".into(),
            ))
        }
    };
    let mut drift = Operator::identity(&layout);
    for ch in channels {
        if ch.rate == 0.0 {
            continue;
        }
        let jdag_j = ch.op.adjoint().matmul(&ch.op);
        drift = drift.add(&jdag_j.scaled(crate::hilbert::C64::new(-0.5 * ch.rate * dt, 0.0)));
    }
    Ok(drift)
}

/// Apply the no-jump drift matrix and renormalize.
pub fn apply_no_jump(state: &QuantumState, drift: &Operator) -> Result<QuantumState> {
    let mut out = drift.apply(state);
    out.normalize_in_place()?;
    Ok(out)
}

/// Per-channel photon emission counters accumulated along one trajectory.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhotonRecord {
    pub counts: Vec<u64>,
}

impl PhotonRecord {
    pub fn new(n_channels: usize) -> Self {
        PhotonRecord {
            counts: vec![0; n_channels],
        }
    }

    pub fn record(&mut self, channel: usize) {
        self.counts[channel] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// One first-order jump/no-jump Monte Carlo step for a single channel.
///
/// With probability p = rate·dt·‖Jψ‖² the collapse operator fires and the
/// renormalized Jψ is returned with `jumped = true`; otherwise the no-jump
/// drift (1 − rate·dt·J†J/2)ψ is applied and renormalized. Requires
/// rate·dt ≤ 0.05 so the first-order split is accurate.
///
/// Convenience form that rebuilds the single-channel drift each call; the
/// trajectory engine uses a cached multi-channel equivalent.
pub fn jump_step<R: rand::Rng + ?Sized>(
    state: &QuantumState,
    channel: &JumpChannel,
    dt: f64,
    rng: &mut R,
) -> Result<(QuantumState, bool)> {
    if !(dt > 0.0) || channel.rate * dt > 0.05 + 1e-12 {
        return Err(QecError::ScheduleInvalid(format!(
            "jump step needs 0 < rate·dt ≤ 0.05 (channel '{}' has rate·dt = {})",
            channel.label,
            channel.rate * dt
        )));
    }
    let p = channel.jump_probability(state, dt);
    if rng.random::<f64>() < p {
        return Ok((channel.apply_jump(state)?, true));
    }
    let drift = no_jump_drift_operator(std::slice::from_ref(channel), dt)?;
    Ok((apply_no_jump(state, &drift)?, false))
}

/// `jump_step` for a collective channel (e.g. J = σ−¹ + σ−² shared between
/// two close emitters). The stochastic contract is identical — the
/// collective physics lives entirely in the channel's operator — but the
/// name keeps call sites self-describing.
pub fn superradiant_jump<R: rand::Rng + ?Sized>(
    state: &QuantumState,
    channel: &JumpChannel,
    dt: f64,
    rng: &mut R,
) -> Result<(QuantumState, bool)> {
    jump_step(state, channel, dt, rng)
}
