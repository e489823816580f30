//! Fully correctable flip-flop sensing with one lossy qubit.
//!
//! Code: c₁ = (|↑00⟩ + |↓11⟩)/√2 and c₂ = (|↓10⟩ + |↑01⟩)/√2 over the
//! lossy qubit and two protected partners. The signal Hamiltonian
//! g(σ₊¹σ₋² + h.c.) maps c₁ ↔ c₂ directly, so the target population
//! oscillates as sin²(gt) with no intermediate level and no ε penalty.
//!
//! Every cycle, σz¹σz² separates the jumped sector (+1: the lossy qubit
//! has relaxed, partners disagree with it) from the code-side sector (−1).
//! In the +1 arm the decay images |↓00⟩, |↓01⟩ are rotated back onto
//! c₁, c₂. In the −1 arm the no-jump weight drift is undone for free:
//! measuring the first partner collapses onto either the undamped
//! (lossy-down) or the uniformly damped (lossy-up) halves of the code
//! words, and a half-sector rotation restores the code words with the
//! logical amplitudes untouched. Trajectories therefore stay exactly on
//! the code span between jumps.

use super::*;
use crate::hilbert::{level_projector, sigma_minus, sigma_plus, Factor, HilbertLayout, Operator};

pub fn make_flipflop_protocol(params: &ProtocolParams) -> Result<ProtocolSpec> {
    params.check_extra_keys(&[], "flipflop")?;
    let layout = HilbertLayout::new(vec![
        Factor::two_level("lossy", "dn", "up"),
        Factor::qubit("p1"),
        Factor::qubit("p2"),
    ])?;

    let c1 = real_superposition(&layout, &[(1.0, &[1, 0, 0]), (1.0, &[0, 1, 1])])?;
    let c2 = real_superposition(&layout, &[(1.0, &[0, 1, 0]), (1.0, &[1, 0, 1])])?;
    let code = CodeSpec::new(
        &layout,
        vec![("c1".into(), c1.clone()), ("c2".into(), c2.clone())],
        vec![],
    )?;

    let flip_flop = {
        let pm = ndarray::linalg::kron(&sigma_plus(), &sigma_minus());
        let mp = ndarray::linalg::kron(&sigma_minus(), &sigma_plus());
        Operator::embed(&layout, &(pm + mp), &[0, 1])?
    };
    let terms = vec![HamiltonianTerm::fixed(params.g, flip_flop)];

    let decay = Operator::embed(&layout, &sigma_minus(), &[0])?;
    let channels = vec![JumpChannel::new("decay", decay.clone(), params.gamma)?];

    let targets = [&c1, &c2];
    let fix_jump = correction_from_op(&layout, &decay, &targets)?;
    let p_dn = Operator::embed(&layout, &level_projector(2, 0), &[0])?;
    let p_up = Operator::embed(&layout, &level_projector(2, 1), &[0])?;
    let fix_down_half = correction_from_op(&layout, &p_dn, &targets)?;
    let fix_up_half = correction_from_op(&layout, &p_up, &targets)?;

    let parity = zz_observable(&layout, &[0, 1])?;
    let partner = zz_observable(&layout, &[1])?;
    let ec = EcNode::measure(
        parity,
        vec![
            (1.0, EcNode::correct(fix_jump)),
            (
                -1.0,
                EcNode::measure(
                    partner,
                    vec![
                        (1.0, EcNode::correct(fix_down_half)),
                        (-1.0, EcNode::correct(fix_up_half)),
                    ],
                ),
            ),
        ],
    );

    let error_sets = vec![ErrorSet {
        name: "lossy_decay".into(),
        labeled: true,
        ops: vec![("sigma_minus_1".into(), decay)],
        expect_correctable: true,
    }];

    Ok(ProtocolSpec {
        name: "flipflop".into(),
        layout: layout.clone(),
        code,
        initial_state: c1,
        terms,
        channels,
        ec,
        dd_swap: None,
        ramsey: None,
        noise_traces: vec![],
        ideal_signal: IdealSignal::TransferSin2 {
            omega: 2.0 * params.g,
        },
        signal_observable: SignalObservable::CodePop(1),
        error_sets,
        params: params.clone(),
    })
}
