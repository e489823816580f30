//! AC signal sensing with a pulse train on an error-corrected code.
//!
//! The signal is an oscillating level shift (g/2)cos(ω₀t)·σz on the sensor
//! half of the |↓0⟩/|↑1⟩ code. A train of simultaneous bit flips σx⊗σx at
//! times (k + ½)·π/ω₀ — the zeros of the drive — rectifies the oscillating
//! phase: each half-period contributes ±2·(g/2)/ω₀ of relative phase with a
//! sign that the swap flips back, so the logical phase grows as 2gt/π,
//! exactly at every pulse-boundary and half-period. Low-frequency σz and σx
//! control noise is echoed away by the same train, and residual code
//! leakage is caught by the σz⊗σz parity cycle as in the static scheme.

use std::sync::Arc;

use super::*;
use crate::hilbert::{sigma_x, sigma_z, Factor, HilbertLayout, Operator};

pub fn make_pulsed_dd_protocol(params: &ProtocolParams) -> Result<ProtocolSpec> {
    params.check_extra_keys(&[], "pulsed_dd")?;
    if params.omega <= 0.0 {
        return Err(QecError::ProtocolInvalid(
            "pulsed_dd needs a positive carrier frequency omega (pulse spacing π/ω)".into(),
        ));
    }
    let layout = HilbertLayout::new(vec![
        Factor::two_level("sensor", "dn", "up"),
        Factor::qubit("good"),
    ])?;

    let c0 = real_superposition(&layout, &[(1.0, &[0, 0])])?;
    let c1 = real_superposition(&layout, &[(1.0, &[1, 1])])?;
    let code = CodeSpec::new(
        &layout,
        vec![("dn0".into(), c0.clone()), ("up1".into(), c1.clone())],
        vec![],
    )?;
    let initial_state = equal_mix(&c0, &c1)?;

    let sz_sensor = Operator::embed(&layout, &sigma_z(), &[0])?;
    let sx_sensor = Operator::embed(&layout, &sigma_x(), &[0])?;
    let sz_good = Operator::embed(&layout, &sigma_z(), &[1])?;
    let swap_both = {
        let xx = ndarray::linalg::kron(&sigma_x(), &sigma_x());
        Operator::embed(&layout, &xx, &[0, 1])?
    };

    let terms = vec![
        HamiltonianTerm {
            op: Arc::new(sz_sensor.clone()),
            profile: CoefficientProfile::Cosine {
                amp: params.g / 2.0,
                omega: params.omega,
                phase: 0.0,
            },
        },
        HamiltonianTerm::fixed(params.nu / 2.0, sz_good),
        HamiltonianTerm {
            op: Arc::new(sz_sensor),
            profile: CoefficientProfile::Noise { trace_index: 0 },
        },
        HamiltonianTerm {
            op: Arc::new(sx_sensor.clone()),
            profile: CoefficientProfile::Noise { trace_index: 1 },
        },
    ];
    let (lo, hi) = params.noise_range_or_default();
    let noise_traces = vec![NoiseTraceSpec { lo, hi }, NoiseTraceSpec { lo, hi }];

    let parity = zz_observable(&layout, &[0, 1])?;
    let ec = EcNode::measure(
        parity,
        vec![
            (1.0, EcNode::Accept),
            (-1.0, EcNode::correct(sx_sensor.clone())),
        ],
    );

    let error_sets = vec![ErrorSet {
        name: "sensor_flip".into(),
        labeled: false,
        ops: vec![("sx_sensor".into(), sx_sensor)],
        expect_correctable: true,
    }];

    Ok(ProtocolSpec {
        name: "pulsed_dd".into(),
        layout: layout.clone(),
        code,
        initial_state,
        terms,
        channels: vec![],
        ec,
        dd_swap: Some(Arc::new(swap_both)),
        ramsey: None,
        noise_traces,
        ideal_signal: IdealSignal::PhaseRamp {
            rate: 2.0 * params.g / std::f64::consts::PI,
        },
        signal_observable: SignalObservable::Survival,
        error_sets,
        params: params.clone(),
    })
}

/// Natural pulse spacing τ = π/ω₀ for the given carrier; the engine expects
/// `Schedule::dd_period` to be set to this (or an odd fraction of it).
pub fn natural_pulse_period(omega: f64) -> f64 {
    std::f64::consts::PI / omega
}
