//! Unit checks of the state-space layer: index conventions, operator
//! embedding, eigendecomposition/propagators, projective measurement, and
//! the fixed matrix conventions of the spin/boson helpers.

use ndarray::{array, Array2};
use num_complex::Complex64 as C64;
use qecsense::hilbert::{
    annihilation, evolve_piecewise_constant, fidelity, level_projector, level_transition,
    measure_projective, number_op, sigma_minus, sigma_plus, sigma_x, sigma_z, unitary_from_pairs,
    Factor, HilbertLayout, Operator, QuantumState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[test]
fn flat_index_puts_the_first_factor_most_significant() {
    let layout = HilbertLayout::new(vec![Factor::qubit("a"), Factor::boson("m", 3)]).unwrap();
    assert_eq!(layout.dim(), 6);
    assert_eq!(layout.flat_index(&[0, 0]).unwrap(), 0);
    assert_eq!(layout.flat_index(&[0, 2]).unwrap(), 2);
    assert_eq!(layout.flat_index(&[1, 0]).unwrap(), 3);
    assert_eq!(layout.flat_index(&[1, 2]).unwrap(), 5);
    for idx in 0..6 {
        let levels = layout.unpack_index(idx);
        assert_eq!(layout.flat_index(&levels).unwrap(), idx);
    }
    assert!(layout.flat_index(&[0, 3]).is_err(), "level out of range");
    assert!(layout.flat_index(&[0]).is_err(), "wrong arity");
    assert_eq!(layout.factor_index("m"), Some(1));
    assert_eq!(layout.factor_index("nope"), None);
}

#[test]
fn spin_helpers_use_the_lower_level_first_convention() {
    // Index 0 is the lower level: σz = diag(−1, +1), σ₋ lowers |1⟩ → |0⟩.
    assert_eq!(sigma_z()[[0, 0]], c(-1.0, 0.0));
    assert_eq!(sigma_z()[[1, 1]], c(1.0, 0.0));
    assert_eq!(sigma_minus()[[0, 1]], c(1.0, 0.0));
    assert_eq!(sigma_minus()[[1, 0]], c(0.0, 0.0));
    assert_eq!(sigma_plus()[[1, 0]], c(1.0, 0.0));
    // |a⟩⟨b| in a three-level space.
    let t = level_transition(3, 2, 0);
    assert_eq!(t[[2, 0]], c(1.0, 0.0));
    assert_eq!(t.iter().filter(|z| z.norm() > 0.0).count(), 1);
    let p = level_projector(3, 1);
    assert_eq!(p[[1, 1]], c(1.0, 0.0));
    assert_eq!(p.iter().filter(|z| z.norm() > 0.0).count(), 1);
}

#[test]
fn boson_helpers_carry_square_root_matrix_elements() {
    let a = annihilation(4);
    assert_eq!(a[[0, 1]], c(1.0, 0.0));
    assert!((a[[1, 2]] - c(2f64.sqrt(), 0.0)).norm() < 1e-15);
    assert!((a[[2, 3]] - c(3f64.sqrt(), 0.0)).norm() < 1e-15);
    let n = number_op(4);
    for k in 0..4 {
        assert_eq!(n[[k, k]], c(k as f64, 0.0));
    }
    // a†a = n
    let layout = HilbertLayout::new(vec![Factor::boson("m", 4)]).unwrap();
    let a_op = Operator::embed(&layout, &a, &[0]).unwrap();
    let n_rebuilt = a_op.adjoint().matmul(&a_op);
    let n_op = Operator::embed(&layout, &n, &[0]).unwrap();
    let diff: f64 = (&n_rebuilt.mat - &n_op.mat).iter().map(|z| z.norm()).sum();
    assert!(diff < 1e-12);
}

#[test]
fn embedding_acts_on_the_requested_factors_only() {
    let layout = HilbertLayout::new(vec![
        Factor::qubit("a"),
        Factor::qubit("b"),
        Factor::qubit("c"),
    ])
    .unwrap();
    let sx_b = Operator::embed(&layout, &sigma_x(), &[1]).unwrap();
    let s = QuantumState::basis(&layout, &[1, 0, 1]).unwrap();
    let flipped = sx_b.apply(&s);
    let expected = QuantumState::basis(&layout, &[1, 1, 1]).unwrap();
    assert!((fidelity(&flipped, &expected) - 1.0).abs() < 1e-12);

    // Two-factor embedding on non-adjacent factors: A acts on the first,
    // C on the last, nothing on the middle.
    let xz = ndarray::linalg::kron(&sigma_x(), &sigma_z());
    let op = Operator::embed(&layout, &xz, &[0, 2]).unwrap();
    let out = op.apply(&QuantumState::basis(&layout, &[0, 1, 1]).unwrap());
    let expected = QuantumState::basis(&layout, &[1, 1, 1]).unwrap();
    assert!((out.inner(&expected) - c(1.0, 0.0)).norm() < 1e-12);

    let bad = Operator::embed(&layout, &xz, &[0]);
    assert!(bad.is_err(), "local dimension must match the factor list");
}

#[test]
fn hermitian_constructor_rejects_non_hermitian_input() {
    let layout = HilbertLayout::new(vec![Factor::qubit("q")]).unwrap();
    assert!(Operator::hermitian_from_matrix(&layout, sigma_minus()).is_err());
    assert!(Operator::hermitian_from_matrix(&layout, sigma_x()).is_ok());
}

#[test]
fn propagator_of_a_transverse_field_is_a_rotation() {
    let layout = HilbertLayout::new(vec![Factor::qubit("q")]).unwrap();
    let g = 0.83;
    let h = Operator::embed(&layout, &sigma_x(), &[0])
        .unwrap()
        .scaled(c(g, 0.0));
    let h = Operator::hermitian_from_matrix(&layout, h.mat).unwrap();
    let t = 1.37;
    let u = h.propagator(t).unwrap();
    let expected: Array2<C64> = array![
        [c((g * t).cos(), 0.0), c(0.0, -(g * t).sin())],
        [c(0.0, -(g * t).sin()), c((g * t).cos(), 0.0)]
    ];
    let diff: f64 = (&u - &expected).iter().map(|z| z.norm()).sum();
    assert!(diff < 1e-12, "propagator deviates by {diff}");

    let psi = QuantumState::basis(&layout, &[0]).unwrap();
    let via_evolve = evolve_piecewise_constant(&psi, &h, t).unwrap();
    let direct = QuantumState::from_vec(&layout, u.dot(&psi.data).to_vec()).unwrap();
    assert!((fidelity(&via_evolve, &direct) - 1.0).abs() < 1e-12);
}

#[test]
fn spectral_norm_matches_the_largest_eigenvalue_magnitude() {
    let layout = HilbertLayout::new(vec![Factor::qubit("q")]).unwrap();
    let m = array![[c(-3.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(2.0, 0.0)]];
    let op = Operator::hermitian_from_matrix(&layout, m).unwrap();
    assert!((op.spectral_norm().unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn projective_measurement_collapses_and_reports_consistent_numbers() {
    let layout = HilbertLayout::new(vec![Factor::qubit("q")]).unwrap();
    let plus = QuantumState::superposition(&layout, &[(c(1.0, 0.0), &[0]), (c(1.0, 0.0), &[1])])
        .unwrap()
        .normalized()
        .unwrap();
    let sz = Operator::hermitian_from_matrix(&layout, sigma_z()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut seen = [0usize; 2];
    for _ in 0..400 {
        let out = measure_projective(&plus, &sz, &mut rng).unwrap();
        assert!((out.probability - 0.5).abs() < 1e-12);
        assert!((out.post_state.norm() - 1.0).abs() < 1e-12);
        assert!(out.eigenvalue.abs() > 0.999);
        seen[if out.eigenvalue > 0.0 { 1 } else { 0 }] += 1;
        // Measuring again reproduces the same outcome with certainty.
        let again = measure_projective(&out.post_state, &sz, &mut rng).unwrap();
        assert_eq!(again.eigenvalue, out.eigenvalue);
        assert!((again.probability - 1.0).abs() < 1e-12);
    }
    // Both outcomes occur with roughly equal frequency (4σ band).
    assert!(seen[0] > 120 && seen[1] > 120, "outcome counts: {seen:?}");
}

#[test]
fn degenerate_measurement_preserves_coherence_inside_the_eigenspace() {
    let layout = HilbertLayout::new(vec![Factor::qubit("a"), Factor::qubit("b")]).unwrap();
    let state = QuantumState::superposition(
        &layout,
        &[
            (c(1.0, 0.0), &[0, 0]),
            (c(1.0, 0.0), &[1, 1]),
            (c(1.0, 0.0), &[0, 1]),
        ],
    )
    .unwrap()
    .normalized()
    .unwrap();
    let zz = {
        let m = ndarray::linalg::kron(&sigma_z(), &sigma_z());
        Operator::hermitian_from_matrix(&layout, m).unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    loop {
        let out = measure_projective(&state, &zz, &mut rng).unwrap();
        if out.eigenvalue > 0.0 {
            assert!((out.probability - 2.0 / 3.0).abs() < 1e-12);
            let bell = QuantumState::superposition(
                &layout,
                &[(c(1.0, 0.0), &[0, 0]), (c(1.0, 0.0), &[1, 1])],
            )
            .unwrap()
            .normalized()
            .unwrap();
            assert!(
                (fidelity(&out.post_state, &bell) - 1.0).abs() < 1e-12,
                "projection must keep the in-space superposition"
            );
            break;
        }
    }
}

#[test]
fn pair_specified_unitaries_map_and_stay_unitary() {
    let layout = HilbertLayout::new(vec![Factor::qubit("a"), Factor::qubit("b")]).unwrap();
    let s00 = QuantumState::basis(&layout, &[0, 0]).unwrap();
    let s11 = QuantumState::basis(&layout, &[1, 1]).unwrap();
    let bell_p = s00.add(&s11).normalized().unwrap();
    let bell_m = s00.add(&s11.scaled(c(-1.0, 0.0))).normalized().unwrap();
    let u = unitary_from_pairs(
        &layout,
        &[(s00.clone(), bell_p.clone()), (s11.clone(), bell_m.clone())],
    )
    .unwrap();
    u.assert_unitary().unwrap();
    assert!((fidelity(&u.apply(&s00), &bell_p) - 1.0).abs() < 1e-12);
    assert!((fidelity(&u.apply(&s11), &bell_m) - 1.0).abs() < 1e-12);

    // Non-orthonormal sources are rejected.
    assert!(unitary_from_pairs(&layout, &[(s00.clone(), bell_p.clone()), (s00, bell_m)]).is_err());
}

#[test]
fn state_constructors_validate_their_input() {
    let layout = HilbertLayout::new(vec![Factor::qubit("q")]).unwrap();
    assert!(QuantumState::from_vec(&layout, vec![c(1.0, 0.0)]).is_err());
    assert!(QuantumState::basis(&layout, &[2]).is_err());
    let zero = QuantumState::from_vec(&layout, vec![c(0.0, 0.0); 2]).unwrap();
    assert!(zero.normalized().is_err(), "zero vector cannot be normalized");
}

#[test]
fn fidelity_is_symmetric_and_phase_blind() {
    let layout = HilbertLayout::new(vec![Factor::qubit("q")]).unwrap();
    let s0 = QuantumState::basis(&layout, &[0]).unwrap();
    let s1 = QuantumState::basis(&layout, &[1]).unwrap();
    let sup = s0.add(&s1).normalized().unwrap();
    let rotated = sup.scaled(C64::from_polar(1.0, 1.234));
    assert!((fidelity(&sup, &rotated) - 1.0).abs() < 1e-12);
    assert!(fidelity(&s0, &s1).abs() < 1e-15);
    assert!((fidelity(&s0, &sup) - 0.5).abs() < 1e-12);
    assert!((fidelity(&sup, &s0) - fidelity(&s0, &sup)).abs() < 1e-15);
}
