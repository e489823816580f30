//! Error-corrected Rabi sensing of a classical drive.
//!
//! A sensor qubit with level splitting g is entangled with a protected
//! qubit of splitting ν; the code words are |↓0⟩ and |↑1⟩. Classical
//! control noise couples through σx on the sensor and kicks the state out
//! of the code span, where the parity syndrome σz⊗σz flags it (−1) and a
//! bit flip on the sensor restores it. The protected superposition keeps
//! accumulating phase at the total gap g + ν, so the survival probability
//! of the prepared state follows cos²((g+ν)t/2).

use std::sync::Arc;

use super::*;
use crate::hilbert::{sigma_x, sigma_z, Factor, HilbertLayout, Operator};

pub fn make_classical_drive_protocol(params: &ProtocolParams) -> Result<ProtocolSpec> {
    params.check_extra_keys(&[], "classical_drive")?;
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
    let sz_good = Operator::embed(&layout, &sigma_z(), &[1])?;
    let sx_sensor = Operator::embed(&layout, &sigma_x(), &[0])?;

    let terms = vec![
        HamiltonianTerm::fixed(params.g / 2.0, sz_sensor),
        HamiltonianTerm::fixed(params.nu / 2.0, sz_good),
        HamiltonianTerm {
            op: Arc::new(sx_sensor.clone()),
            profile: CoefficientProfile::Noise { trace_index: 0 },
        },
    ];
    let (lo, hi) = params.noise_range_or_default();

    // Parity syndrome: +1 on the code span, −1 after a sensor flip.
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
        name: "classical_drive".into(),
        layout: layout.clone(),
        code,
        initial_state,
        terms,
        channels: vec![],
        ec,
        dd_swap: None,
        ramsey: None,
        noise_traces: vec![NoiseTraceSpec { lo, hi }],
        ideal_signal: IdealSignal::SurvivalCos2 {
            omega: params.g + params.nu,
        },
        signal_observable: SignalObservable::Survival,
        error_sets,
        params: params.clone(),
    })
}
