//! High-order (zeroing) control barrier functions with a singularity-free
//! truncation and a closed-form minimally-invasive safety filter.
//!
//! The crate is organized around one pipeline:
//!
//! * [`chain`] builds the psi-series over a constraint function `b`, applies
//!   the truncation `h = chi(b / xi)` that zeroes the constraint row on the
//!   deep interior, and produces the affine row `(a, c)` of the admissible
//!   input set `{u : a u + c >= 0}`.
//! * [`filter`] projects a nominal input onto that half-space in closed form.
//! * [`comparison`] provides the vectorial comparison machinery (forced
//!   psi-dynamics, auxiliary cascade, quasimonotonicity and domination
//!   checks) used to validate the invariance/stability theory numerically.
//! * [`systems`] ships the two reference plants: a planar double integrator
//!   with a disk constraint and a 12-state rigid-body attitude system with an
//!   interconnected-cell safe region on SO(3).
//! * [`sim`] integrates the closed loop with a fixed-step RK4 scheme and logs
//!   everything the acceptance checks need.
//! * [`verify`] runs sampling-based certificate checks over state boxes.
//! * [`scenarios`] wires the shipped case studies together.

pub mod chain;
pub mod classk;
pub mod comparison;
pub mod error;
pub mod filter;
pub mod jet;
pub mod scenarios;
pub mod sim;
pub mod systems;
pub mod verify;

pub use chain::{BarrierChain, ChiTruncation, ConstraintProvider, JetLieProvider, LieTerms};
pub use classk::ExtendedClassK;
pub use error::{Error, Result};
pub use filter::{filter_control, verify_kkt, FilterResult};
pub use jet::Jet2;
pub use sim::{integrate_closed_loop, integrate_closed_loop_partial, SimOutcome, Trajectory};
pub use systems::SystemModel;
