//! Simulation engine for a differential correlation electrometer built on
//! circular-state Rydberg atoms.
//!
//! The atom is modelled as a spin-J ladder (J = (n-1)/2 for principal quantum
//! number n).  A microwave Ramsey interferometer brackets two radio-frequency
//! pulse pairs that drive the ladder out to a spin coherent state and back,
//! transiently giving the atom a large electric dipole of opposite sign in the
//! two windows.  The interferometer phase then measures the *difference* of
//! the electric field between the two windows, turning the atom into a
//! correlation electrometer with a tunable delay.
//!
//! Module map:
//! - [`spin_ladder`]: spin-J states, rotations, exact unitary time evolution.
//! - [`sequence`]: pulse timelines, file format, dipole balancing.
//! - [`fieldgen`]: stochastic and deterministic test-field synthesis.
//! - [`ramsey`]: shot-level interferometer simulation and Monte Carlo scans.
//! - [`analysis`]: closed-form contrast models, spectral response, sensitivity.

pub mod analysis;
pub mod constants;
pub mod fieldgen;
pub mod ramsey;
pub mod rng;
pub mod sequence;
pub mod spin_ladder;
pub mod window;
