//! Correctable sensing with two four-level atoms and frequency-resolved
//! emission.
//!
//! Each atom carries an upper pair {|0⟩, |1⟩} and a lower pair {|d⟩, |u⟩};
//! |1⟩ relaxes to |u⟩ and |0⟩ to |d⟩, and the four routes (two per atom)
//! emit photons at four distinct frequencies. The code words
//! c₁ = (|11⟩ + |00⟩)/√2 and c₂ = (|01⟩ + |10⟩)/√2 keep both atoms in the
//! upper pair with equal total decay weight, so the no-detection evolution
//! is exactly uniform and only flagged jumps need repair.
//!
//! A decay of atom i collapses it into the lower pair; the cycle projects
//! each atom onto its lower pair in turn, reads which lower level is
//! occupied, and rotates the image pair back onto the code words — e.g.
//! after the |1⟩→|u⟩ route on atom 1, |u1⟩ ↦ c₁ and |u0⟩ ↦ c₂. The sensing
//! coupling g|c₁⟩⟨c₂| + h.c. acts entirely inside the code span, so the
//! transferred population follows sin²(gt) unharmed by corrected decays.

use super::*;
use crate::hilbert::{level_projector, level_transition, Factor, HilbertLayout, Operator};

/// Level order within each atom: index 0 = |d⟩, 1 = |u⟩ (lower pair),
/// 2 = |0⟩, 3 = |1⟩ (upper pair).
const LVL_D: usize = 0;
const LVL_U: usize = 1;
const LVL_0: usize = 2;
const LVL_1: usize = 3;

pub fn make_multilevel_protocol(params: &ProtocolParams) -> Result<ProtocolSpec> {
    params.check_extra_keys(&[], "multilevel")?;
    let atom = |name: &str| Factor::new(name, &["d", "u", "0", "1"]);
    let layout = HilbertLayout::new(vec![atom("atom1"), atom("atom2")])?;

    let c1 = real_superposition(&layout, &[(1.0, &[LVL_1, LVL_1]), (1.0, &[LVL_0, LVL_0])])?;
    let c2 = real_superposition(&layout, &[(1.0, &[LVL_0, LVL_1]), (1.0, &[LVL_1, LVL_0])])?;
    let code = CodeSpec::new(
        &layout,
        vec![("c1".into(), c1.clone()), ("c2".into(), c2.clone())],
        vec![],
    )?;

    let terms = vec![HamiltonianTerm::fixed(params.g, coupling_term(1.0, &c1, &c2)?)];

    // Four frequency-labeled decay routes.
    let route = |atom_idx: usize, from: usize, to: usize| -> Result<Operator> {
        Operator::embed(&layout, &level_transition(4, to, from), &[atom_idx])
    };
    let decays = [
        ("atom1_1u", route(0, LVL_1, LVL_U)?),
        ("atom1_0d", route(0, LVL_0, LVL_D)?),
        ("atom2_1u", route(1, LVL_1, LVL_U)?),
        ("atom2_0d", route(1, LVL_0, LVL_D)?),
    ];
    let channels = decays
        .iter()
        .map(|(label, op)| JumpChannel::new(label, op.clone(), params.gamma))
        .collect::<Result<Vec<_>>>()?;

    // Projector onto the lower (decayed) pair of one atom, and the
    // lower-pair polarization |u⟩⟨u| − |d⟩⟨d| that identifies the route.
    let lower_pair = |atom_idx: usize| -> Result<Operator> {
        let m = level_projector(4, LVL_D) + level_projector(4, LVL_U);
        Operator::embed(&layout, &m, &[atom_idx])
    };
    let polarization = |atom_idx: usize| -> Result<Operator> {
        let m = level_projector(4, LVL_U) - level_projector(4, LVL_D);
        Operator::embed(&layout, &m, &[atom_idx])
    };

    let targets = [&c1, &c2];
    let fix = |op: &Operator| correction_from_op(&layout, op, &targets);
    let fix_a1_u = fix(&decays[0].1)?;
    let fix_a1_d = fix(&decays[1].1)?;
    let fix_a2_u = fix(&decays[2].1)?;
    let fix_a2_d = fix(&decays[3].1)?;

    let ec = EcNode::measure(
        lower_pair(0)?,
        vec![
            (
                1.0,
                EcNode::measure(
                    polarization(0)?,
                    vec![
                        (1.0, EcNode::correct(fix_a1_u)),
                        (-1.0, EcNode::correct(fix_a1_d)),
                    ],
                ),
            ),
            (
                0.0,
                EcNode::measure(
                    lower_pair(1)?,
                    vec![
                        (
                            1.0,
                            EcNode::measure(
                                polarization(1)?,
                                vec![
                                    (1.0, EcNode::correct(fix_a2_u)),
                                    (-1.0, EcNode::correct(fix_a2_d)),
                                ],
                            ),
                        ),
                        (0.0, EcNode::Accept),
                    ],
                ),
            ),
        ],
    );

    let error_sets = vec![ErrorSet {
        name: "labeled_decays".into(),
        labeled: true,
        ops: decays
            .iter()
            .map(|(l, op)| (l.to_string(), op.clone()))
            .collect(),
        expect_correctable: true,
    }];

    Ok(ProtocolSpec {
        name: "multilevel".into(),
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
