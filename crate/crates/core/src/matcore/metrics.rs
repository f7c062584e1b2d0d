use super::{ComplexMatrix, UnitaryMatrix};
use crate::error::{MeshError, Result};

fn check_square_pair(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<()> {
    if !u.is_square() {
        return Err(MeshError::shape("square matrix", u.shape_str()));
    }
    u.check_same_shape(v)
}

/// Frobenius figure of merit `J = (1/N) Σ_ij |u_ij − v_ij|²`.
///
/// Sensitive to global phase: `J(U, e^{iθ}U) > 0` for `θ ≠ 0 mod 2π`.
pub fn frobenius_distance(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<f64> {
    check_square_pair(u, v)?;
    let sum: f64 = u
        .as_slice()
        .iter()
        .zip(v.as_slice())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(sum / u.rows() as f64)
}

/// Same quantity as [`frobenius_distance`], evaluated as the entry sum of the
/// Hadamard product `(U − V) ⊙ (U − V)*`.
pub fn frobenius_distance_hadamard(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<f64> {
    check_square_pair(u, v)?;
    let diff = u - v;
    let conj = ComplexMatrix::from_fn(diff.rows(), diff.cols(), |i, j| diff[(i, j)].conj());
    let sum: f64 = diff
        .as_slice()
        .iter()
        .zip(conj.as_slice())
        .map(|(a, b)| (a * b).re)
        .sum();
    Ok(sum / u.rows() as f64)
}

/// Fidelity `(1/N²) |Tr(V^H U)|²`, insensitive to global phase.
pub fn fidelity(u: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<f64> {
    check_square_pair(u, v)?;
    // Tr(V^H U) = Σ_ij conj(v_ij) u_ij
    let tr: num_complex::Complex64 = u
        .as_slice()
        .iter()
        .zip(v.as_slice())
        .map(|(a, b)| b.conj() * a)
        .sum();
    let n = u.rows() as f64;
    Ok((tr.norm_sqr() / (n * n)).clamp(0.0, 1.0))
}
