//! Two-tone sideband (Mølmer–Sørensen-like) Raman sensing through a shared
//! motional mode.
//!
//! Code words A = (|↑00⟩ + |↓11⟩)/√2 ⊗ |0_v⟩ and
//! C = (|↓10⟩ + |↑01⟩)/√2 ⊗ |0_v⟩ exchange population through the
//! phonon-excited intermediate B = (|↓00⟩ + |↓01⟩)/√2 ⊗ |1_v⟩: sidebands
//! ηg on the lossy spin and ηΩ on the first partner couple A and C to B's
//! two components with equal diagonal shifts, so after adiabatic
//! elimination of the mode (detuned by δ) the C population oscillates at
//! ω_eff = 2·η²gΩ/δ while B carries only ε² ≈ (ηg/δ)² of the weight.
//!
//! The correction cycle measures which of three sectors holds the
//! register:
//! * S₁ (lossy spin down, one quantum coherent): the undamped halves of
//!   A and C plus B's first component — rotated back, logic exact;
//! * S₂ (lossy spin up): the damped halves plus B's second component —
//!   rotated back, logic exact (uniform damping cancels on normalization);
//! * S₃ (quantum lost): the spin-decay images of the dressed words. The
//!   images still carry both logical amplitudes, and the correction maps
//!   them back onto the dressed words themselves, rebuilding the in-flight
//!   intermediate amplitude along with the logic — a spin decay therefore
//!   perturbs the transfer only at O(ε²) in amplitude.
//! Phonon loss also dumps the register into S₃, but through the
//! intermediate component alone: the logical amplitudes are gone, and the
//! reassembled state carries a random transfer phase. That channel, at
//! rate γ_ph·ε², is what limits the scheme's effective coherence time to
//! T₂* = (γ/γ_ph)·T1/ε².

use super::*;
use crate::hilbert::{
    annihilation, conj_transpose, number_op, sigma_minus, sigma_plus, unitary_from_pairs, Factor,
    HilbertLayout, Operator, QuantumState,
};

pub fn make_ms_protocol(params: &ProtocolParams) -> Result<ProtocolSpec> {
    params.check_extra_keys(&["phonon_rate", "epsilon"], "ms")?;
    let mut params = params.clone();
    if let Some(&eps) = params.extra.get("epsilon") {
        // Convenience: symmetric sidebands at a fixed ratio to the detuning.
        if params.delta <= 0.0 {
            return Err(QecError::ProtocolInvalid(
                "ms extra.epsilon needs a positive detuning delta".into(),
            ));
        }
        params.g = eps * params.delta;
        params.omega = eps * params.delta;
        params.eta = 1.0;
    }
    let (g, om, delta, eta) = (params.g, params.omega, params.delta, params.eta);
    require_perturbative(eta * g, delta, "ms lossy-spin sideband ηg/δ")?;
    require_perturbative(eta * om, delta, "ms partner sideband ηΩ/δ")?;

    let layout = HilbertLayout::new(vec![
        Factor::two_level("spin", "dn", "up"),
        Factor::qubit("p1"),
        Factor::qubit("p2"),
        Factor::boson("vib", 2),
    ])?;

    let a = real_superposition(&layout, &[(1.0, &[1, 0, 0, 0]), (1.0, &[0, 1, 1, 0])])?;
    let c = real_superposition(&layout, &[(1.0, &[0, 1, 0, 0]), (1.0, &[1, 0, 1, 0])])?;
    let b = real_superposition(&layout, &[(1.0, &[0, 0, 0, 1]), (1.0, &[0, 0, 1, 1])])?;
    let code = CodeSpec::new(
        &layout,
        vec![("A".into(), a.clone()), ("C".into(), c.clone())],
        vec![("B".into(), b.clone())],
    )?;

    let a_loc = annihilation(2);
    let sideband_on = |factor: usize| -> Result<Operator> {
        let down_create = ndarray::linalg::kron(&sigma_minus(), &conj_transpose(&a_loc));
        let up_destroy = ndarray::linalg::kron(&sigma_plus(), &a_loc);
        Operator::embed(&layout, &(down_create + up_destroy), &[factor, 3])
    };
    let terms = vec![
        HamiltonianTerm::fixed(eta * g, sideband_on(0)?),
        HamiltonianTerm::fixed(eta * om, sideband_on(1)?),
        HamiltonianTerm::fixed(delta, Operator::embed(&layout, &number_op(2), &[3])?),
    ];

    let spin_decay = Operator::embed(&layout, &sigma_minus(), &[0])?;
    let phonon_loss = Operator::embed(&layout, &a_loc, &[3])?;
    let phonon_rate = params.extra_or("phonon_rate", 2.0 * params.gamma / 3.0);
    let channels = vec![
        JumpChannel::new("spin", spin_decay.clone(), params.gamma)?,
        JumpChannel::new("phonon", phonon_loss, phonon_rate)?,
    ];

    let basis = |lv: &[usize]| QuantumState::basis(&layout, lv);
    let s1 = [basis(&[0, 1, 1, 0])?, basis(&[0, 1, 0, 0])?, basis(&[0, 0, 0, 1])?];
    let s2 = [basis(&[1, 0, 0, 0])?, basis(&[1, 0, 1, 0])?, basis(&[0, 0, 1, 1])?];
    let s3 = [basis(&[0, 0, 0, 0])?, basis(&[0, 0, 1, 0])?];
    let p1 = Operator::projector(&s1.iter().collect::<Vec<_>>())?;
    let p2 = Operator::projector(&s2.iter().collect::<Vec<_>>())?;
    let p3 = Operator::projector(&s3.iter().collect::<Vec<_>>())?;

    let full_targets = [&a, &c, &b];
    let u1 = correction_from_op(&layout, &p1, &full_targets)?;
    let u2 = correction_from_op(&layout, &p2, &full_targets)?;

    // Restore the *dressed* words after a spin decay: their images carry the
    // logical amplitudes, so this rebuilds the in-flight intermediate
    // amplitude too instead of resetting the transfer. The dressed pair and
    // its images are orthogonal only to O(ε²), so straighten them out before
    // asking for a unitary.
    let project_out = |s: &QuantumState, b: &QuantumState| -> Result<QuantumState> {
        let ip = b.inner(s);
        let data: Vec<C64> = s
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(x, y)| x - y * ip)
            .collect();
        QuantumState::from_vec(&layout, data)?.normalized()
    };
    let a_dressed = dressed_state(&layout, &terms, &[&a, &c], &a)?;
    let c_dressed = project_out(&dressed_state(&layout, &terms, &[&a, &c], &c)?, &a_dressed)?;
    let img_a = spin_decay.apply(&a_dressed).normalized()?;
    let img_c = project_out(&spin_decay.apply(&c_dressed).normalized()?, &img_a)?;
    let u3 = unitary_from_pairs(
        &layout,
        &[(img_a, a_dressed.clone()), (img_c, c_dressed)],
    )?;

    let sector_obs = Operator::hermitian_from_matrix(
        &layout,
        p1.add(&p2.scaled(C64::new(2.0, 0.0)))
            .add(&p3.scaled(C64::new(3.0, 0.0)))
            .mat,
    )?;
    let ec = EcNode::measure(
        sector_obs,
        vec![
            (1.0, EcNode::correct(u1)),
            (2.0, EcNode::correct(u2)),
            (3.0, EcNode::correct(u3)),
        ],
    );

    let error_sets = vec![ErrorSet {
        name: "spin_decay".into(),
        labeled: true,
        ops: vec![("sigma_minus_spin".into(), spin_decay)],
        expect_correctable: true,
    }];

    let initial_state = a_dressed;
    let omega_eff = if delta != 0.0 {
        2.0 * eta * eta * g * om / delta
    } else {
        0.0
    };

    Ok(ProtocolSpec {
        name: "ms".into(),
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
        signal_observable: SignalObservable::CodePop(1),
        error_sets,
        params,
    })
}
