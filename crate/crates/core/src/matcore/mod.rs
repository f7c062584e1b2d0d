//! Dense complex linear algebra, seeded sampling, unitary projection and
//! matrix distance measures.

mod matrix;
mod metrics;
mod rng;
mod unitary;

pub use matrix::ComplexMatrix;
pub use metrics::{fidelity, frobenius_distance, frobenius_distance_hadamard};
pub use rng::Rng;
pub use unitary::{
    haar_random_unitary, perturb_unitary, polar_unitary_factor, UnitaryMatrix, SINGULAR_RTOL,
    TOL_UNITARY,
};
