//! Sensing a two-qubit exchange interaction under dephasing noise.
//!
//! The signal is the strength g of a flip-flop coupling between two sensor
//! qubits. The code words are the singlet/triplet combinations of the
//! single-excitation sector, tagged by a protected qubit:
//! (|↓↑⟩ − |↑↓⟩)/√2 ⊗ |0⟩ and (|↓↑⟩ + |↑↓⟩)/√2 ⊗ |1⟩, split by g + ν.
//! Independent dephasing noise on either sensor toggles the exchange
//! symmetry, swapping each code word with its orthogonal partner at fixed
//! tag; the syndrome P_code − P_err detects the swap and σz on the first
//! sensor undoes it (both noise routes differ only by a global sign).

use std::sync::Arc;

use super::*;
use crate::hilbert::{sigma_minus, sigma_plus, sigma_z, Factor, HilbertLayout, Operator};

pub fn make_interaction_protocol(params: &ProtocolParams) -> Result<ProtocolSpec> {
    params.check_extra_keys(&[], "interaction")?;
    let layout = HilbertLayout::new(vec![
        Factor::two_level("s1", "dn", "up"),
        Factor::two_level("s2", "dn", "up"),
        Factor::qubit("good"),
    ])?;

    // |↓↑x⟩ = [0,1,x], |↑↓x⟩ = [1,0,x]
    let c0 = real_superposition(&layout, &[(1.0, &[0, 1, 0]), (-1.0, &[1, 0, 0])])?;
    let c1 = real_superposition(&layout, &[(1.0, &[0, 1, 1]), (1.0, &[1, 0, 1])])?;
    let e0 = real_superposition(&layout, &[(1.0, &[0, 1, 0]), (1.0, &[1, 0, 0])])?;
    let e1 = real_superposition(&layout, &[(1.0, &[0, 1, 1]), (-1.0, &[1, 0, 1])])?;
    let code = CodeSpec::new(
        &layout,
        vec![
            ("singlet0".into(), c0.clone()),
            ("triplet1".into(), c1.clone()),
        ],
        vec![],
    )?;
    let initial_state = equal_mix(&c0, &c1)?;

    let flip_flop = {
        let pm = ndarray::linalg::kron(&sigma_plus(), &sigma_minus());
        let mp = ndarray::linalg::kron(&sigma_minus(), &sigma_plus());
        Operator::embed(&layout, &(pm + mp), &[0, 1])?
    };
    let sz1 = Operator::embed(&layout, &sigma_z(), &[0])?;
    let sz2 = Operator::embed(&layout, &sigma_z(), &[1])?;
    let sz_good = Operator::embed(&layout, &sigma_z(), &[2])?;

    let terms = vec![
        HamiltonianTerm::fixed(params.g / 2.0, flip_flop),
        HamiltonianTerm::fixed(params.nu / 2.0, sz_good),
        HamiltonianTerm {
            op: Arc::new(sz1.clone()),
            profile: CoefficientProfile::Noise { trace_index: 0 },
        },
        HamiltonianTerm {
            op: Arc::new(sz2.clone()),
            profile: CoefficientProfile::Noise { trace_index: 1 },
        },
    ];
    let (lo, hi) = params.noise_range_or_default();
    let noise_traces = vec![NoiseTraceSpec { lo, hi }, NoiseTraceSpec { lo, hi }];

    let p_code = Operator::projector(&[&c0, &c1])?;
    let p_err = Operator::projector(&[&e0, &e1])?;
    let syndrome = Operator::hermitian_from_matrix(
        &layout,
        p_code.add(&p_err.scaled(C64::new(-1.0, 0.0))).mat,
    )?;
    let ec = EcNode::measure(
        syndrome,
        vec![
            (1.0, EcNode::Accept),
            (-1.0, EcNode::correct(sz1.clone())),
        ],
    );

    let error_sets = vec![ErrorSet {
        name: "sensor_dephasing".into(),
        labeled: false,
        ops: vec![("sz_s1".into(), sz1), ("sz_s2".into(), sz2)],
        expect_correctable: true,
    }];

    Ok(ProtocolSpec {
        name: "interaction".into(),
        layout: layout.clone(),
        code,
        initial_state,
        terms,
        channels: vec![],
        ec,
        dd_swap: None,
        ramsey: None,
        noise_traces,
        ideal_signal: IdealSignal::SurvivalCos2 {
            omega: params.g + params.nu,
        },
        signal_observable: SignalObservable::Survival,
        error_sets,
        params: params.clone(),
    })
}
