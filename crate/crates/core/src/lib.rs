//! Quantum phase transitions of a finite Jaynes-Cummings-Hubbard cavity
//! lattice at finite temperature.
//!
//! The lattice Hamiltonian decouples into independent Jaynes-Cummings
//! blocks, one per photon normal mode ([`spectrum`]). Within a truncated
//! two-exciton basis ([`statespace`]) the Gibbs state is block diagonal
//! ([`thermal`]), so trace distances and fidelities ([`metrics`]) are computed
//! block by block. The remaining modules build on that kernel:
//!
//! * [`observables`] - total excitation number and ground-energy branches,
//! * [`dynamics`] - unitary evolution of the factorized state and the
//!   time-maximum of the atomic trace distance,
//! * [`scaling`] - one-exciton closed form, coupling derivative at the first
//!   critical point, and the exponential finite-size fit,
//! * [`meanfield`] - single-site decoupled model with a self-consistent
//!   order parameter,
//! * [`jumps`] - detector for discontinuities in sampled curves.
//!
//! Energies are in units of the hopping rate κ and the Boltzmann constant
//! is 1, so `beta` is the dimensionless κβ.

// guards are written `!(x > 0.0)` so that NaN fails them too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod jumps;
pub mod meanfield;
pub mod metrics;
pub mod observables;
pub mod scaling;
pub mod spectrum;
pub mod statespace;
pub mod thermal;

pub use error::{Error, Result};
pub use metrics::{fidelity, trace_distance, EigenDecomposition};
pub use scaling::ScalingFit;
pub use spectrum::{CriticalPoint, DressedLevel, LatticeParams, NormalMode};
pub use statespace::{BasisState, DensityMatrix, StateSpace};

pub use nalgebra::DMatrix;
pub use num_complex::Complex64;
