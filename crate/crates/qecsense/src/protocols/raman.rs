//! Raman transition through a decaying intermediate state.
//!
//! Code states A = (|00⟩+|11⟩)/√2 ⊗ |0⟩ and C = (|00⟩−|11⟩)/√2 ⊗ |1⟩ over
//! a lossy qubit, a protected partner and a protected tag qubit. The
//! sensing leg g₁ and the drive leg g₂ couple A and C to the intermediate
//! B = (|00⟩−|11⟩)/√2 ⊗ |0⟩, detuned by Δ, so population oscillates
//! A ↔ C at ω_eff = 2·g₁g₂/Δ while B stays at ε² = (g/Δ)² occupancy.
//!
//! A decay of the lossy qubit collapses the register onto
//! a·|01⟩|0⟩ − b·|01⟩|1⟩-type states whose first two qubits disagree, so
//! the parity σz¹σz² flags the jump (−1). The correction sends each image
//! back: |010⟩ → A and |011⟩ → −C, the sign coming straight from the image
//! of C under the jump. Without a flag the register is untouched — an
//! unflagged cycle leaves the +1 eigenspace alone, and the small coherent
//! leakage A↔B is energetically suppressed by the gap.
//!
//! Trajectories start in the dressed counterpart of C so that the
//! intermediate amplitude is stationary rather than sloshing: each detected
//! decay then kicks the register by a fixed ±ε·(phase) step in the A
//! direction, the random-walk channel probed by the walk statistics tests.

use super::*;
use crate::hilbert::{sigma_minus, Factor, HilbertLayout, Operator};

pub fn make_raman_t1_protocol(params: &ProtocolParams) -> Result<ProtocolSpec> {
    params.check_extra_keys(&[], "raman_t1")?;
    let (g1, g2, delta) = (params.g, params.omega, params.delta);
    require_perturbative(g1, delta, "raman_t1 sensing leg g/Δ")?;
    require_perturbative(g2, delta, "raman_t1 drive leg Ω/Δ")?;

    let layout = HilbertLayout::new(vec![
        Factor::qubit("lossy"),
        Factor::qubit("partner"),
        Factor::qubit("tag"),
    ])?;

    let a = real_superposition(&layout, &[(1.0, &[0, 0, 0]), (1.0, &[1, 1, 0])])?;
    let c = real_superposition(&layout, &[(1.0, &[0, 0, 1]), (-1.0, &[1, 1, 1])])?;
    let b = real_superposition(&layout, &[(1.0, &[0, 0, 0]), (-1.0, &[1, 1, 0])])?;
    let code = CodeSpec::new(
        &layout,
        vec![("A".into(), a.clone()), ("C".into(), c.clone())],
        vec![("B".into(), b.clone())],
    )?;

    let terms = vec![
        HamiltonianTerm::fixed(g1, coupling_term(1.0, &b, &a)?),
        HamiltonianTerm::fixed(g2, coupling_term(1.0, &b, &c)?),
        HamiltonianTerm::fixed(delta, shift_term(1.0, &b)?),
    ];

    let decay = Operator::embed(&layout, &sigma_minus(), &[0])?;
    let channels = vec![JumpChannel::new("decay", decay.clone(), params.gamma)?];

    let parity = zz_observable(&layout, &[0, 1])?;
    let restore = correction_from_op(&layout, &decay, &[&a, &c])?;
    let ec = EcNode::measure(
        parity,
        vec![(1.0, EcNode::Accept), (-1.0, EcNode::correct(restore))],
    );

    let error_sets = vec![ErrorSet {
        name: "lossy_decay".into(),
        labeled: true,
        ops: vec![("sigma_minus_1".into(), decay)],
        expect_correctable: true,
    }];

    let initial_state = dressed_state(&layout, &terms, &[&a, &c], &c)?;
    let omega_eff = if delta != 0.0 { 2.0 * g1 * g2 / delta } else { 0.0 };

    Ok(ProtocolSpec {
        name: "raman_t1".into(),
        layout: layout.clone(),
        code,
        initial_state,
        terms,
        channels,
        ec,
        dd_swap: None,
        ramsey: None,
        noise_traces: vec![],
        ideal_signal: IdealSignal::TransferSin2 { omega: omega_eff },
        signal_observable: SignalObservable::CodePop(0),
        error_sets,
        params: params.clone(),
    })
}
