//! Sensing with a collectively decaying pair.
//!
//! Two emitters decay through the same field mode, J = σ₋¹ + σ₋², so only
//! the symmetric combinations radiate. The code words are A = |111⟩ (both
//! emitters up, tag up; energy g from the level shifts) and the symmetric
//! single-excitation state B = (|010⟩ + |100⟩)/√2 (energy −ω_G from the
//! exchange term), giving a survival fringe at g + ω_G for the prepared
//! equal superposition.
//!
//! A collective jump maps a·A + b·B → a·Ã + b·|000⟩ with
//! Ã = (|011⟩ + |101⟩)/√2, preserving the logical amplitudes (the ‖J·c‖
//! rates are equal — that is what makes the code work despite the √2
//! superradiant enhancement). The three-qubit parity σz⊗σz⊗σz is +1 on
//! the code and −1 on both images, and the pair-image rotation restores
//! the state exactly.

use super::*;
use crate::hilbert::{sigma_minus, sigma_plus, sigma_z, Factor, HilbertLayout, Operator};

pub fn make_superradiance_protocol(params: &ProtocolParams) -> Result<ProtocolSpec> {
    params.check_extra_keys(&[], "superradiance")?;
    let layout = HilbertLayout::new(vec![
        Factor::two_level("e1", "dn", "up"),
        Factor::two_level("e2", "dn", "up"),
        Factor::qubit("tag"),
    ])?;

    let a = real_superposition(&layout, &[(1.0, &[1, 1, 1])])?;
    let b = real_superposition(&layout, &[(1.0, &[0, 1, 0]), (1.0, &[1, 0, 0])])?;
    let code = CodeSpec::new(
        &layout,
        vec![("A".into(), a.clone()), ("B".into(), b.clone())],
        vec![],
    )?;
    let initial_state = equal_mix(&a, &b)?;

    let shifts = Operator::embed(&layout, &sigma_z(), &[0])?
        .add(&Operator::embed(&layout, &sigma_z(), &[1])?);
    let exchange = {
        let pm = ndarray::linalg::kron(&sigma_plus(), &sigma_minus());
        let mp = ndarray::linalg::kron(&sigma_minus(), &sigma_plus());
        Operator::embed(&layout, &(pm + mp), &[0, 1])?
    };
    let terms = vec![
        HamiltonianTerm::fixed(
            params.g / 2.0,
            Operator::hermitian_from_matrix(&layout, shifts.mat)?,
        ),
        HamiltonianTerm::fixed(-params.omega_g, exchange),
    ];

    let collective = Operator::embed(&layout, &sigma_minus(), &[0])?
        .add(&Operator::embed(&layout, &sigma_minus(), &[1])?);
    let channels = vec![JumpChannel::new("collective", collective.clone(), params.gamma)?];

    let parity = zz_observable(&layout, &[0, 1, 2])?;
    let restore = correction_from_op(&layout, &collective, &[&a, &b])?;
    let ec = EcNode::measure(
        parity,
        vec![(1.0, EcNode::Accept), (-1.0, EcNode::correct(restore))],
    );

    let error_sets = vec![ErrorSet {
        name: "collective_decay".into(),
        labeled: true,
        ops: vec![("J_collective".into(), collective)],
        expect_correctable: true,
    }];

    Ok(ProtocolSpec {
        name: "superradiance".into(),
        layout: layout.clone(),
        code,
        initial_state,
        terms,
        channels,
        ec,
        dd_swap: None,
        ramsey: None,
        noise_traces: vec![],
        ideal_signal: IdealSignal::SurvivalCos2 {
            omega: params.g + params.omega_g,
        },
        signal_observable: SignalObservable::Survival,
        error_sets,
        params: params.clone(),
    })
}
