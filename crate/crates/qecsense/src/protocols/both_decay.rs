//! Exchange sensing with two three-level atoms that can both decay, plus a
//! stable partner qubit.
//!
//! Each atom has levels {|!⟩, |0⟩, |1⟩}; both |0⟩ and |1⟩ relax to the shelf
//! |!⟩ through separately resolved emission lines, so every decay announces
//! which atom fired and which level it came from. The code words
//! c₁ = (|10 u⟩ + |01 d⟩)/√2 and c₂ = (|01 u⟩ + |10 d⟩)/√2 correlate the
//! atomic exchange configuration with the partner qubit; each of the four
//! decay routes maps the pair {c₁, c₂} onto an orthogonal two-dimensional
//! image whose partner qubit still distinguishes the logical words, so a
//! paired rotation restores the code exactly.
//!
//! The cycle first checks each atom for shelf population, reads the
//! surviving atom's level to pick the route, and applies the matching
//! rebuild. The exchange g(|10⟩⟨01| + |01⟩⟨10|) between the atoms swaps
//! c₁ ↔ c₂, so the transferred population follows sin²(gt).

use super::*;
use crate::hilbert::{level_projector, level_transition, Factor, HilbertLayout, Operator};
use ndarray::linalg::kron;

/// Atom level order: index 0 = shelf |!⟩, 1 = |0⟩, 2 = |1⟩.
const LVL_SHELF: usize = 0;
const LVL_0: usize = 1;
const LVL_1: usize = 2;

pub fn make_both_decay_protocol(params: &ProtocolParams) -> Result<ProtocolSpec> {
    params.check_extra_keys(&[], "both_decay")?;
    let atom = |name: &str| Factor::new(name, &["!", "0", "1"]);
    let layout = HilbertLayout::new(vec![
        atom("atom1"),
        atom("atom2"),
        Factor::two_level("partner", "d", "u"),
    ])?;
    let (d, u) = (0usize, 1usize);

    let c1 = real_superposition(
        &layout,
        &[(1.0, &[LVL_1, LVL_0, u]), (1.0, &[LVL_0, LVL_1, d])],
    )?;
    let c2 = real_superposition(
        &layout,
        &[(1.0, &[LVL_0, LVL_1, u]), (1.0, &[LVL_1, LVL_0, d])],
    )?;
    let code = CodeSpec::new(
        &layout,
        vec![("c1".into(), c1.clone()), ("c2".into(), c2.clone())],
        vec![],
    )?;

    // Exchange |10⟩⟨01| + |01⟩⟨10| between the two atoms; the partner qubit
    // is untouched, and the coupling swaps c₁ ↔ c₂.
    let hop = kron(
        &level_transition(3, LVL_1, LVL_0),
        &level_transition(3, LVL_0, LVL_1),
    );
    let exchange = &hop + &hop.t().mapv(|z| z.conj());
    let exchange = Operator::embed(&layout, &exchange, &[0, 1])?;
    let terms = vec![HamiltonianTerm::fixed(params.g, exchange)];

    // Four resolved decay routes: each atom's |1⟩→|!⟩ and |0⟩→|!⟩ lines.
    let route = |atom_idx: usize, from: usize| -> Result<Operator> {
        Operator::embed(&layout, &level_transition(3, LVL_SHELF, from), &[atom_idx])
    };
    let decays = [
        ("atom1_from1", route(0, LVL_1)?),
        ("atom1_from0", route(0, LVL_0)?),
        ("atom2_from1", route(1, LVL_1)?),
        ("atom2_from0", route(1, LVL_0)?),
    ];
    let channels = decays
        .iter()
        .map(|(label, op)| JumpChannel::new(label, op.clone(), params.gamma))
        .collect::<Result<Vec<_>>>()?;

    let shelf = |atom_idx: usize| -> Result<Operator> {
        Operator::embed(&layout, &level_projector(3, LVL_SHELF), &[atom_idx])
    };
    // Level readout |0⟩⟨0| − |1⟩⟨1| on the atom that did not decay.
    let level_sign = |atom_idx: usize| -> Result<Operator> {
        let m = level_projector(3, LVL_0) - level_projector(3, LVL_1);
        Operator::embed(&layout, &m, &[atom_idx])
    };

    let targets = [&c1, &c2];
    let fix = |op: &Operator| correction_from_op(&layout, op, &targets);
    let fix_a1_from1 = fix(&decays[0].1)?;
    let fix_a1_from0 = fix(&decays[1].1)?;
    let fix_a2_from1 = fix(&decays[2].1)?;
    let fix_a2_from0 = fix(&decays[3].1)?;

    // After atom 1 decays from |1⟩ the survivor atom 2 sits in |0⟩, and vice
    // versa, so the survivor's level sign selects the route.
    let ec = EcNode::measure(
        shelf(0)?,
        vec![
            (
                1.0,
                EcNode::measure(
                    level_sign(1)?,
                    vec![
                        (1.0, EcNode::correct(fix_a1_from1)),
                        (-1.0, EcNode::correct(fix_a1_from0)),
                    ],
                ),
            ),
            (
                0.0,
                EcNode::measure(
                    shelf(1)?,
                    vec![
                        (
                            1.0,
                            EcNode::measure(
                                level_sign(0)?,
                                vec![
                                    (1.0, EcNode::correct(fix_a2_from1)),
                                    (-1.0, EcNode::correct(fix_a2_from0)),
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
        name: "both_decay".into(),
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
