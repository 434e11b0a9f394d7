//! Simulation and analysis toolkit for a coherently driven emitter strongly
//! coupled to a lossy cavity mode.
//!
//! The crate is organised bottom-up:
//!
//! * [`hilbert`]: truncated emitter ⊗ Fock space, operators, the driven
//!   Jaynes-Cummings Hamiltonian and the dressed-state ladder.
//! * [`dynamics`]: Lindblad master equation (steady state and time-dependent
//!   evolution), quantum-jump trajectories and drive calibration.
//! * [`correlations`]: photon statistics of the cavity output channel, both
//!   for continuous-wave and pulsed probes.
//! * [`blinking`]: classical intermittency, laser background and
//!   synthesis of two-detector click streams.
//! * [`hbt`]: coincidence histograms, the blinking-envelope fit and the two
//!   normalization conventions.
//!
//! All rates are angular frequencies in rad/s and all times are in seconds.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blinking;
pub mod correlations;
pub mod dynamics;
pub mod error;
pub mod hbt;
pub mod hilbert;
pub mod units;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
