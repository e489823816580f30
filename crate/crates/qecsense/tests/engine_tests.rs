//! End-to-end checks of the trajectory engine against closed-form
//! dynamics: exact corrected runs, pulse-train rectification, Ramsey
//! fringes, forced-event algebra, determinism, and schedule validation.

use qecsense::engine::{
    run_ensemble, run_ensemble_map, run_reference, run_trajectory, run_trajectory_forced,
    ForcedEvent, ForcedEventKind, Schedule,
};
use qecsense::hilbert::{sigma_x, Operator};
use qecsense::protocols::{build_protocol, ProtocolParams, ProtocolSpec};
use std::sync::Arc;

fn build(name: &str, params: ProtocolParams) -> ProtocolSpec {
    build_protocol(name, &params).unwrap_or_else(|e| panic!("building {name}: {e}"))
}

fn flipflop(g: f64, gamma: f64) -> ProtocolSpec {
    build(
        "flipflop",
        ProtocolParams {
            g,
            gamma,
            ..ProtocolParams::default()
        },
    )
}

fn quiet_drive() -> ProtocolSpec {
    build(
        "classical_drive",
        ProtocolParams {
            g: 1.1,
            nu: 0.6,
            gamma: 0.0,
            noise_range: Some((0.0, 0.0)),
            ..ProtocolParams::default()
        },
    )
}

#[test]
fn corrected_flipflop_run_stays_exactly_on_reference() {
    // Every decay is flagged by the syndrome and rotated back, and the
    // per-step no-jump reweighting is undone by the partner measurement, so
    // with a correction cycle every step the trajectories reproduce the
    // noiseless reference exactly — jumps and all.
    let spec = flipflop(0.7, 0.4);
    let sched = Schedule {
        dt: 0.05,
        total_time: 3.0,
        sample_times: vec![0.0, 0.75, 1.5, 2.25, 3.0],
        ec_interval: Some(0.05),
        dd_period: None,
        noise_resample: None,
        apply_ramsey: false,
    };
    let stats = run_ensemble(&spec, &sched, 24, 0xFEED).unwrap();
    let mut total_photons = 0.0;
    for ch in &stats.photon_counts {
        total_photons += ch.mean * stats.n_traj as f64;
    }
    assert!(
        total_photons > 0.5,
        "expected at least one decay in the ensemble, got {total_photons}"
    );
    for (k, &t) in stats.sample_times.iter().enumerate() {
        assert!(
            (stats.fidelity.mean[k] - 1.0).abs() < 1e-9,
            "fidelity at t={t}: {}",
            stats.fidelity.mean[k]
        );
        assert!(stats.fidelity.stderr[k] < 1e-9);
        assert!((stats.code_pop.mean[k] - 1.0).abs() < 1e-9);
        let ideal = spec.ideal_signal.eval(t);
        let signal = stats.signal(spec.signal_observable).mean[k];
        assert!(
            (signal - ideal).abs() < 1e-9,
            "signal at t={t}: {signal} vs ideal {ideal}"
        );
        let survival = stats.survival.mean[k];
        let expected = (spec.params.g * t).cos().powi(2);
        assert!(
            (survival - expected).abs() < 1e-9,
            "survival at t={t}: {survival} vs {expected}"
        );
    }
}

#[test]
fn drive_protocol_with_silent_noise_matches_closed_form() {
    let spec = quiet_drive();
    let sched = Schedule {
        dt: 0.02,
        total_time: 4.0,
        sample_times: vec![0.0, 1.0, 2.0, 3.0, 4.0],
        ec_interval: None,
        dd_period: None,
        noise_resample: Some(0.2),
        apply_ramsey: false,
    };
    let stats = run_ensemble(&spec, &sched, 2, 7).unwrap();
    for (k, &t) in stats.sample_times.iter().enumerate() {
        let expected = spec.ideal_signal.eval(t);
        assert!(
            (stats.survival.mean[k] - expected).abs() < 1e-9,
            "t={t}: {} vs {expected}",
            stats.survival.mean[k]
        );
    }
}

#[test]
fn reference_run_has_unit_fidelity_by_construction() {
    let spec = quiet_drive();
    let sched = Schedule {
        dt: 0.05,
        total_time: 1.0,
        sample_times: vec![0.5, 1.0],
        ec_interval: None,
        dd_period: None,
        noise_resample: Some(0.2),
        apply_ramsey: false,
    };
    let rec = run_reference(&spec, &sched).unwrap();
    assert_eq!(rec.fidelity, vec![1.0, 1.0]);
    for (k, &t) in rec.sample_times.iter().enumerate() {
        assert!((rec.survival[k] - spec.ideal_signal.eval(t)).abs() < 1e-9);
    }
}

#[test]
fn zero_duration_interferometer_returns_full_fringe() {
    let spec = build(
        "ramsey_flipflop",
        ProtocolParams {
            omega: 2.0,
            nu: 0.4,
            delta: 0.5,
            gamma: 0.3,
            ..ProtocolParams::default()
        },
    );
    let sched = Schedule {
        dt: 0.01,
        total_time: 0.0,
        sample_times: vec![0.0],
        ec_interval: None,
        dd_period: None,
        noise_resample: None,
        apply_ramsey: true,
    };
    let stats = run_ensemble(&spec, &sched, 3, 11).unwrap();
    let p_c = stats.signal(spec.signal_observable).mean[0];
    assert!(
        (p_c - 1.0).abs() < 1e-9,
        "zero-duration fringe should be cos²(0) = 1, got {p_c}"
    );
}

#[test]
fn interferometer_fringe_tracks_detuning() {
    let spec = build(
        "ramsey_flipflop",
        ProtocolParams {
            omega: 2.0,
            nu: 0.4,
            delta: 0.5,
            gamma: 0.0,
            ..ProtocolParams::default()
        },
    );
    let total = 1.7;
    let sched = Schedule {
        dt: 0.01,
        total_time: total,
        sample_times: vec![total],
        ec_interval: None,
        dd_period: None,
        noise_resample: None,
        apply_ramsey: true,
    };
    let stats = run_ensemble(&spec, &sched, 2, 3).unwrap();
    let p_c = stats.signal(spec.signal_observable).mean[0];
    let expected = spec.ideal_signal.eval(total);
    assert!(
        (p_c - expected).abs() < 1e-9,
        "fringe at T={total}: {p_c} vs cos²(δT/2) = {expected}"
    );
}

#[test]
fn pulse_train_rectifies_oscillating_signal_phase() {
    let omega = 8.0 * std::f64::consts::PI;
    let spec = build(
        "pulsed_dd",
        ProtocolParams {
            g: 0.9,
            omega,
            gamma: 0.0,
            noise_range: Some((0.0, 0.0)),
            ..ProtocolParams::default()
        },
    );
    let tau = qecsense::protocols::natural_pulse_period(omega);
    let dt = tau / 1024.0;
    let sched = Schedule {
        dt,
        total_time: 16.0 * tau,
        sample_times: (0..=4).map(|k| 4.0 * k as f64 * tau).collect(),
        ec_interval: None,
        dd_period: Some(tau),
        noise_resample: Some(tau),
        apply_ramsey: false,
    };
    let stats = run_ensemble(&spec, &sched, 1, 1).unwrap();
    for (k, &t) in stats.sample_times.iter().enumerate() {
        let expected = spec.ideal_signal.eval(t);
        assert!(
            (stats.survival.mean[k] - expected).abs() < 1e-6,
            "rectified phase at t={t}: {} vs {expected}",
            stats.survival.mean[k]
        );
    }
}

#[test]
fn results_are_identical_for_any_worker_count() {
    let spec = flipflop(0.9, 0.5);
    let sched = Schedule {
        dt: 0.05,
        total_time: 2.0,
        sample_times: vec![1.0, 2.0],
        ec_interval: Some(0.25),
        dd_period: None,
        noise_resample: None,
        apply_ramsey: false,
    };
    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_ensemble(&spec, &sched, 12, 0xABCD).unwrap())
    };
    let a = run_with(1);
    let b = run_with(3);
    assert_eq!(a.fidelity.mean, b.fidelity.mean);
    assert_eq!(a.fidelity.stderr, b.fidelity.stderr);
    assert_eq!(a.survival.mean, b.survival.mean);
    assert_eq!(a.code_pop.mean, b.code_pop.mean);
    for (x, y) in a.photon_counts.iter().zip(b.photon_counts.iter()) {
        assert_eq!(x.mean, y.mean);
        assert_eq!(x.stderr, y.stderr);
    }
}

#[test]
fn single_trajectory_matches_its_slot_in_the_ensemble() {
    let spec = flipflop(0.9, 0.5);
    let sched = Schedule {
        dt: 0.05,
        total_time: 2.0,
        sample_times: vec![1.0, 2.0],
        ec_interval: Some(0.25),
        dd_period: None,
        noise_resample: None,
        apply_ramsey: false,
    };
    let solo = run_trajectory(&spec, &sched, 99, 5).unwrap();
    let all = run_ensemble_map(&spec, &sched, 6, 99, |r| r).unwrap();
    assert_eq!(solo.seed_index, all[5].seed_index);
    assert_eq!(solo.fidelity, all[5].fidelity);
    assert_eq!(solo.survival, all[5].survival);
    assert_eq!(solo.photon_counts, all[5].photon_counts);
    assert_eq!(solo.final_state.data, all[5].final_state.data);
}

#[test]
fn same_seed_reproduces_noise_different_seed_does_not() {
    let spec = build(
        "classical_drive",
        ProtocolParams {
            g: 1.0,
            nu: 0.3,
            gamma: 0.0,
            noise_range: Some((-0.4, 0.4)),
            ..ProtocolParams::default()
        },
    );
    let sched = Schedule {
        dt: 0.02,
        total_time: 2.0,
        sample_times: vec![2.0],
        ec_interval: None,
        dd_period: None,
        noise_resample: Some(0.1),
        apply_ramsey: false,
    };
    let a = run_trajectory(&spec, &sched, 42, 0).unwrap();
    let b = run_trajectory(&spec, &sched, 42, 0).unwrap();
    let c = run_trajectory(&spec, &sched, 42, 1).unwrap();
    assert_eq!(a.final_state.data, b.final_state.data);
    assert!(
        (a.survival[0] - c.survival[0]).abs() > 1e-12,
        "different trajectory seeds drew identical noise"
    );
}

#[test]
fn forced_flip_escapes_the_code_and_the_cycle_repairs_it() {
    let spec = quiet_drive();
    let sx_sensor = Operator::embed(&spec.layout, &sigma_x(), &[0]).unwrap();
    let flip = ForcedEvent {
        time: 1.0,
        kind: ForcedEventKind::Unitary {
            op: Arc::new(sx_sensor),
        },
    };
    let mut sched = Schedule {
        dt: 0.02,
        total_time: 2.0,
        sample_times: vec![2.0],
        ec_interval: None,
        dd_period: None,
        noise_resample: Some(0.2),
        apply_ramsey: false,
    };
    // Without a correction cycle the flipped state is orthogonal to the
    // code span, so the fidelity collapses.
    let broken = run_trajectory_forced(&spec, &sched, 1, 0, &[flip.clone()]).unwrap();
    assert!(
        broken.fidelity[0] < 1e-9,
        "uncorrected flip should be orthogonal to the reference, got {}",
        broken.fidelity[0]
    );
    // With the cycle scheduled at the same boundary the parity syndrome
    // fires and the inverse flip restores the state exactly.
    sched.ec_interval = Some(0.5);
    let fixed = run_trajectory_forced(&spec, &sched, 1, 0, &[flip]).unwrap();
    assert!(
        (fixed.fidelity[0] - 1.0).abs() < 1e-9,
        "corrected flip should restore the reference, got {}",
        fixed.fidelity[0]
    );
}

#[test]
fn forced_jump_is_counted_and_repaired_exactly() {
    let spec = flipflop(0.7, 0.0);
    let sched = Schedule {
        dt: 0.05,
        total_time: 1.2,
        sample_times: vec![0.3, 1.2],
        ec_interval: Some(0.6),
        dd_period: None,
        noise_resample: None,
        apply_ramsey: false,
    };
    let jump = ForcedEvent {
        time: 0.6,
        kind: ForcedEventKind::Jump { channel: 0 },
    };
    let rec = run_trajectory_forced(&spec, &sched, 21, 0, &[jump]).unwrap();
    assert_eq!(rec.photon_counts, vec![1]);
    assert!((rec.fidelity[0] - 1.0).abs() < 1e-12, "before the jump");
    assert!(
        (rec.fidelity[1] - 1.0).abs() < 1e-9,
        "jump at a cycle boundary must be repaired exactly, got {}",
        rec.fidelity[1]
    );
}

#[test]
fn correction_cycles_win_over_free_decay() {
    let spec = flipflop(0.7, 0.5);
    let base = Schedule {
        dt: 0.05,
        total_time: 4.0,
        sample_times: vec![4.0],
        ec_interval: Some(0.05),
        dd_period: None,
        noise_resample: None,
        apply_ramsey: false,
    };
    let with_ec = run_ensemble(&spec, &base, 48, 2024).unwrap();
    let mut no_ec_sched = base.clone();
    no_ec_sched.ec_interval = None;
    let no_ec = run_ensemble(&spec, &no_ec_sched, 48, 2024).unwrap();
    assert!((with_ec.fidelity.mean[0] - 1.0).abs() < 1e-9);
    assert!(
        no_ec.fidelity.mean[0] < 0.9,
        "uncorrected fidelity should degrade markedly, got {}",
        no_ec.fidelity.mean[0]
    );
}

#[test]
fn trivial_hamiltonian_leaves_the_state_alone() {
    let spec = build(
        "eight_qubit_demo",
        ProtocolParams {
            gamma: 0.0,
            ..ProtocolParams::default()
        },
    );
    let sched = Schedule::plain(0.25, 1.0, vec![0.0, 0.5, 1.0]);
    let stats = run_ensemble(&spec, &sched, 1, 0).unwrap();
    for k in 0..3 {
        assert!((stats.survival.mean[k] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sample_times_snap_to_the_step_grid_and_deduplicate() {
    let spec = flipflop(0.7, 0.0);
    let sched = Schedule {
        dt: 0.1,
        total_time: 1.0,
        sample_times: vec![0.301, 0.299, 1.0],
        ec_interval: None,
        dd_period: None,
        noise_resample: None,
        apply_ramsey: false,
    };
    let stats = run_ensemble(&spec, &sched, 1, 0).unwrap();
    assert_eq!(stats.sample_times.len(), 2);
    assert_eq!(stats.sample_times[0], 3.0 * 0.1);
    assert_eq!(stats.sample_times[1], 10.0 * 0.1);
}

#[test]
fn invalid_schedules_are_rejected_with_reasons() {
    let ff = flipflop(0.7, 0.5);
    let drive = quiet_drive();

    // Total time off the step grid.
    let sched = Schedule::plain(0.3, 1.0, vec![]);
    assert!(run_ensemble(&ff, &sched, 1, 0).is_err());

    // Sample time outside the run.
    let sched = Schedule::plain(0.1, 1.0, vec![1.5]);
    assert!(run_ensemble(&ff, &sched, 1, 0).is_err());

    // Pulse train on a protocol without a pulse.
    let mut sched = Schedule::plain(0.1, 1.0, vec![1.0]);
    sched.dd_period = Some(0.4);
    sched.noise_resample = Some(0.2);
    assert!(run_ensemble(&drive, &sched, 1, 0).is_err());

    // Interferometric analysis on a protocol without pulses.
    let mut sched = Schedule::plain(0.1, 1.0, vec![1.0]);
    sched.apply_ramsey = true;
    assert!(run_ensemble(&ff, &sched, 1, 0).is_err());

    // Classical noise declared but no resample interval given.
    let sched = Schedule::plain(0.1, 1.0, vec![1.0]);
    assert!(run_ensemble(&drive, &sched, 1, 0).is_err());

    // Resample interval without any classical noise.
    let mut sched = Schedule::plain(0.1, 1.0, vec![1.0]);
    sched.noise_resample = Some(0.2);
    assert!(run_ensemble(&ff, &sched, 1, 0).is_err());

    // Jump probability per step too large for the unraveling.
    let hot = flipflop(0.7, 1.0);
    let sched = Schedule::plain(0.06, 1.2, vec![1.2]);
    assert!(run_ensemble(&hot, &sched, 1, 0).is_err());

    // Time-varying term too strong for the step size.
    let loud = build(
        "classical_drive",
        ProtocolParams {
            g: 1.0,
            gamma: 0.0,
            noise_range: Some((-100.0, 100.0)),
            ..ProtocolParams::default()
        },
    );
    let mut sched = Schedule::plain(0.02, 1.0, vec![1.0]);
    sched.noise_resample = Some(0.1);
    assert!(run_ensemble(&loud, &sched, 1, 0).is_err());
}

#[test]
fn plain_zero_duration_run_reports_the_initial_state() {
    let spec = flipflop(0.7, 0.5);
    let sched = Schedule::plain(0.1, 0.0, vec![0.0]);
    let stats = run_ensemble(&spec, &sched, 2, 0).unwrap();
    assert_eq!(stats.sample_times, vec![0.0]);
    assert!((stats.survival.mean[0] - 1.0).abs() < 1e-12);
    assert!((stats.code_pop.mean[0] - 1.0).abs() < 1e-12);
}
