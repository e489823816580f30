//! Red-sideband sensing on a spin + motional mode, with photon-resolved
//! correction.
//!
//! Code: c₁ = (|↑,0⟩ + |↓,1⟩)/√2 ⊗ {|0⟩,|1⟩ tag} arranged as
//! c₁ = (|↑,0,0⟩ + |↓,1,1⟩)/√2, c₂ = (|↓,1,0⟩ + |↑,0,1⟩)/√2, coupled at
//! ηΩ by the sideband exchange σ₋a† + σ₊a, so the c₂ population follows
//! sin²(ηΩ t).
//!
//! Both decay routes — spin relaxation σ₋ and phonon loss a — funnel the
//! register into the *same* pair of states |↓,0,0⟩, |↓,0,1⟩ but with the
//! logical amplitudes attached to opposite members, so the two errors fail
//! the joint recoverability condition unless the emission record is kept:
//! the spin photon and the phonon quantum live at distinct frequencies, and
//! conditioning the correction on which detector fired picks the right
//! reassignment. The cycle first splits jumped (+1) from unjumped (−1)
//! sectors via σz_spin·σz_vib, repairs no-jump amplitude drift in the −1
//! arm by collapsing onto the damped or undamped halves of the code words,
//! and in the +1 arm applies the correction selected by the photon record.

use super::*;
use crate::hilbert::{
    annihilation, conj_transpose, level_projector, sigma_minus, sigma_plus, Factor,
    HilbertLayout, Operator,
};

pub fn make_sideband_protocol(params: &ProtocolParams) -> Result<ProtocolSpec> {
    params.check_extra_keys(&["phonon_rate"], "sideband")?;
    let layout = HilbertLayout::new(vec![
        Factor::two_level("spin", "dn", "up"),
        Factor::boson("vib", 2),
        Factor::qubit("tag"),
    ])?;

    let c1 = real_superposition(&layout, &[(1.0, &[1, 0, 0]), (1.0, &[0, 1, 1])])?;
    let c2 = real_superposition(&layout, &[(1.0, &[0, 1, 0]), (1.0, &[1, 0, 1])])?;
    let code = CodeSpec::new(
        &layout,
        vec![("c1".into(), c1.clone()), ("c2".into(), c2.clone())],
        vec![],
    )?;

    let a_loc = annihilation(2);
    let sideband = {
        let lower_create = ndarray::linalg::kron(&sigma_minus(), &conj_transpose(&a_loc));
        let raise_destroy = ndarray::linalg::kron(&sigma_plus(), &a_loc);
        Operator::embed(&layout, &(lower_create + raise_destroy), &[0, 1])?
    };
    let terms = vec![HamiltonianTerm::fixed(params.eta * params.omega, sideband)];

    let spin_decay = Operator::embed(&layout, &sigma_minus(), &[0])?;
    let phonon_loss = Operator::embed(&layout, &a_loc, &[1])?;
    let phonon_rate = params.extra_or("phonon_rate", params.gamma);
    let channels = vec![
        JumpChannel::new("spin", spin_decay.clone(), params.gamma)?,
        JumpChannel::new("phonon", phonon_loss.clone(), phonon_rate)?,
    ];

    let targets = [&c1, &c2];
    let fix_spin = correction_from_op(&layout, &spin_decay, &targets)?;
    let fix_phonon = correction_from_op(&layout, &phonon_loss, &targets)?;
    let p_vib1 = Operator::embed(&layout, &level_projector(2, 1), &[1])?;
    let p_spin_up = Operator::embed(&layout, &level_projector(2, 1), &[0])?;
    let fix_excited_half = correction_from_op(&layout, &p_vib1, &targets)?;
    let fix_spin_half = correction_from_op(&layout, &p_spin_up, &targets)?;

    let joint = zz_observable(&layout, &[0, 1])?;
    let vib_z = zz_observable(&layout, &[1])?;
    let ec = EcNode::measure(
        joint,
        vec![
            (
                -1.0, // no jump: one excitation still present
                EcNode::measure(
                    vib_z,
                    vec![
                        (1.0, EcNode::correct(fix_excited_half)),
                        (-1.0, EcNode::correct(fix_spin_half)),
                    ],
                ),
            ),
            (
                1.0, // excitation lost: route on the emission record
                EcNode::IfPhotonSince {
                    channels: vec![0],
                    then: Box::new(EcNode::correct(fix_spin)),
                    else_: Box::new(EcNode::IfPhotonSince {
                        channels: vec![1],
                        then: Box::new(EcNode::correct(fix_phonon)),
                        else_: Box::new(EcNode::Accept),
                    }),
                },
            ),
        ],
    );

    let error_sets = vec![ErrorSet {
        name: "labeled_losses".into(),
        labeled: true,
        ops: vec![
            ("spin_sigma_minus".into(), spin_decay),
            ("phonon_a".into(), phonon_loss),
        ],
        expect_correctable: true,
    }];

    Ok(ProtocolSpec {
        name: "sideband".into(),
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
            omega: 2.0 * params.eta * params.omega,
        },
        signal_observable: SignalObservable::CodePop(1),
        error_sets,
        params: params.clone(),
    })
}
