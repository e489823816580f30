//! Ramsey interrogation of a protected flip-flop gap.
//!
//! The logical pair is A = (|u↓⟩ + |d↑⟩)/√2 ⊗ |1⟩ and
//! C = (|u↓⟩ − |d↑⟩)/√2 ⊗ |0⟩, split by Ω + ν through a flip-flop drive on
//! the first two qubits and a tag-qubit shift. A logical π/2 pulse prepares
//! (A − iC)/√2, the gap accumulates phase for a time T, and a second π/2
//! pulse with drive phase (Ω + ν + δ)·T converts the accumulated mismatch
//! into the C population: P_C = cos²(δT/2).
//!
//! The first qubit relaxes |u⟩ → |d⟩. A flagged jump lands on
//! a|d↓1⟩ + b|d↓0⟩; unflagged cycles leave amplitude-skewed code words.
//! Both are repaired by the cascaded σz¹ then σz² measurement: the (d,↓)
//! sector is the jump image, while the (u,↓) and (d,↑) sectors are the
//! undamped/damped halves of the code words, each of which carries the
//! logical amplitudes intact (the damped half picks up C with a minus sign,
//! reproduced automatically by the sector-image construction).

use std::sync::Arc;

use super::*;
use crate::hilbert::{level_projector, sigma_minus, Factor, HilbertLayout, Operator, C64};
use ndarray::Array2;

pub fn make_ramsey_flipflop_protocol(params: &ProtocolParams) -> Result<ProtocolSpec> {
    params.check_extra_keys(&[], "ramsey_flipflop")?;
    let layout = HilbertLayout::new(vec![
        Factor::two_level("lossy", "d", "u"),
        Factor::two_level("partner", "dn", "up"),
        Factor::qubit("tag"),
    ])?;

    let a = real_superposition(&layout, &[(1.0, &[1, 0, 1]), (1.0, &[0, 1, 1])])?;
    let c = real_superposition(&layout, &[(1.0, &[1, 0, 0]), (-1.0, &[0, 1, 0])])?;
    let code = CodeSpec::new(
        &layout,
        vec![("A".into(), a.clone()), ("C".into(), c.clone())],
        vec![],
    )?;

    let flip_flop = {
        use crate::hilbert::sigma_plus;
        let mp = ndarray::linalg::kron(&sigma_minus(), &sigma_plus());
        let pm = ndarray::linalg::kron(&sigma_plus(), &sigma_minus());
        Operator::embed(&layout, &(mp + pm), &[0, 1])?
    };
    let tag_shift = zz_observable(&layout, &[2])?;
    let terms = vec![
        HamiltonianTerm::fixed(params.omega / 2.0, flip_flop),
        HamiltonianTerm::fixed(params.nu / 2.0, tag_shift),
    ];

    let decay = Operator::embed(&layout, &sigma_minus(), &[0])?;
    let channels = vec![JumpChannel::new("decay", decay.clone(), params.gamma)?];

    // Sector projectors for the syndrome cascade.
    let p = |f: usize, lvl: usize| Operator::embed(&layout, &level_projector(2, lvl), &[f]);
    let sector_u_dn = p(0, 1)?.matmul(&p(1, 0)?);
    let sector_d_up = p(0, 0)?.matmul(&p(1, 1)?);

    let targets = [&a, &c];
    let fix_jump = correction_from_op(&layout, &decay, &targets)?;
    let fix_u_dn = correction_from_op(&layout, &sector_u_dn, &targets)?;
    let fix_d_up = correction_from_op(&layout, &sector_d_up, &targets)?;

    let z1 = zz_observable(&layout, &[0])?;
    let z2 = zz_observable(&layout, &[1])?;
    let ec = EcNode::measure(
        z1,
        vec![
            (
                1.0, // lossy qubit still up: no jump on this half
                EcNode::measure(
                    z2.clone(),
                    vec![(-1.0, EcNode::correct(fix_u_dn)), (1.0, EcNode::Accept)],
                ),
            ),
            (
                -1.0,
                EcNode::measure(
                    z2,
                    vec![
                        (-1.0, EcNode::correct(fix_jump)),
                        (1.0, EcNode::correct(fix_d_up)),
                    ],
                ),
            ),
        ],
    );

    // Logical π/2 pulse: exp(-i π/4 σ_L(φ)) with
    // σ_L(φ) = e^{iφ}|C⟩⟨A| + e^{-iφ}|A⟩⟨C|; since σ_L² is the code
    // projector the exponential is assembled in closed form.
    let carrier = params.omega + params.nu + params.delta;
    let mat_ca = Operator::outer(&c, &a).mat;
    let mat_ac = Operator::outer(&a, &c).mat;
    let p_code = Operator::projector(&[&a, &c])?.mat;
    let eye: Array2<C64> = Array2::eye(layout.dim());
    let lay = layout.clone();
    let pulse = move |phi: f64| {
        let (cos, sin) = (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);
        let e_plus = C64::from_polar(1.0, phi);
        let sigma_l = &mat_ca * e_plus + &mat_ac * e_plus.conj();
        let mat =
            &eye + &(&p_code * C64::new(cos - 1.0, 0.0)) + &(sigma_l * C64::new(0.0, -sin));
        Operator::from_matrix(&lay, mat).expect("ramsey pulse assembly")
    };
    pulse(0.73).assert_unitary()?;
    let ramsey = RamseyScheme {
        carrier,
        pulse: Arc::new(pulse),
    };

    let error_sets = vec![ErrorSet {
        name: "lossy_decay".into(),
        labeled: true,
        ops: vec![("sigma_minus_1".into(), decay)],
        expect_correctable: true,
    }];

    Ok(ProtocolSpec {
        name: "ramsey_flipflop".into(),
        layout: layout.clone(),
        code,
        initial_state: a,
        terms,
        channels,
        ec,
        dd_swap: None,
        ramsey: Some(ramsey),
        noise_traces: vec![],
        ideal_signal: IdealSignal::RamseyCos2 {
            delta: params.delta,
        },
        signal_observable: SignalObservable::CodePop(1),
        error_sets,
        params: params.clone(),
    })
}
