//! Learning and programming of reconfigurable linear-optical interferometers.
//!
//! An interferometer is modelled as alternating diagonal phase layers and
//! fixed mode-mixing unitaries,
//!
//! ```text
//! U = Φ_{L+1} U_L Φ_L … Φ_2 U_1 Φ_1
//! ```
//!
//! The crate fits the mixing ("basis") matrices `U_ℓ` to sampled
//! (phase settings, unitary) pairs and then uses the fitted model to find
//! the phase settings that realise a requested unitary.
//!
//! Modules, bottom-up:
//!
//! * [`matcore`]: dense complex matrices, seeded sampling, unitary projection
//!   and distance measures.
//! * [`mesh`]: the layered model, forward evaluation, auxiliary product
//!   chains and analytic gradients.
//! * [`optim`]: L-BFGS / steepest descent with a strong-Wolfe line search.
//! * [`learn`]: dataset synthesis, model fitting and cross-validation.
//! * [`tune`]: phase programming against a learned model.
//! * [`io`]: JSON/CSV interchange formats.
//! * [`sweep`]: experiment runner and parameter sweeps.

pub mod error;
pub mod io;
pub mod learn;
pub mod matcore;
pub mod mesh;
pub mod optim;
pub mod sweep;
pub mod tune;

pub use error::{MeshError, Result};
pub use matcore::{ComplexMatrix, Rng, UnitaryMatrix, TOL_UNITARY};
pub use mesh::{MeshModel, PhaseSchedule};
