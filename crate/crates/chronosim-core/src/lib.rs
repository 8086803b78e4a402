//! Numerical simulator of proper-time evolution for relativistic quantum clocks.
//!
//! A clock here is a finite-dimensional internal system whose energy gaps tick
//! proper time; it rides on a wave packet whose centre-of-mass momentum and
//! position couple the internal evolution to kinematic and gravitational time
//! dilation. The crate provides:
//!
//! * Gaussian wave-packet states with closed-form overlaps and moments, plus
//!   position-grid density matrices for everything non-analytic ([`states`]).
//! * Internal clock models with commensurate spectra and the covariant time
//!   observable built on them ([`clock`]).
//! * Static-metric coefficients (post-Newtonian and exact isotropic forms)
//!   and the classical redshift factors they imply ([`metric`]).
//! * An exact operator-ordering calculus for polynomials in position and
//!   momentum, with Weyl and one-parameter orderings ([`ordering`]).
//! * The expansion of the square-root Hamiltonian into a centre-of-mass part
//!   and two dilation couplings ([`hamiltonian`]).
//! * Evolution backends: analytic flat-space quadrature, dense grid
//!   eigendecomposition, first-order perturbative propagation, and the
//!   gravitational dephasing limit ([`evolve`]).
//! * Rate extraction, universality checks, and coherence-witness observables
//!   ([`observables`]), plus a configuration-driven scenario runner
//!   ([`scenario`]).
//!
//! Internal units set `hbar = c = 1`; [`units`] converts SI quantities into
//! that system for a chosen reference mass.

pub mod clock;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod hamiltonian;
pub mod metric;
pub mod observables;
pub mod operators;
pub mod ordering;
pub mod scenario;
pub mod states;
pub mod units;

pub use error::{Error, Result};
