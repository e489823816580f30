//! Quantum-trajectory simulation of sensing protocols protected by error
//! correction.
//!
//! The crate models small tensor-product systems (qubits plus truncated
//! boson modes), evolves pure states under piecewise-constant Hamiltonians
//! with stochastic jump/no-jump dissipation, applies each protocol's
//! syndrome-measurement-and-correction cycle, and reduces trajectory
//! ensembles to sensitivity and coherence-time figures of merit.
//!
//! Layering:
//! * [`hilbert`] — layouts, states, operators, exact eigenbasis propagators,
//!   projective measurement.
//! * [`noise`] — classical noise traces, jump channels, the first-order
//!   stochastic unraveling.
//! * [`protocols`] — the protocol library: codes, sensing Hamiltonians,
//!   dissipation, correction trees, and correctability checking.
//! * [`engine`] — trajectory stepper, forced-event runs, ensembles.
//! * [`estimators`] — closed-form sensitivity, optimal interrogation time,
//!   coherence-time fits, random-walk statistics.

pub mod engine;
pub mod error;
pub mod estimators;
pub mod hilbert;
pub mod noise;
pub mod protocols;

pub use error::{QecError, Result};
