use std::ops::Deref;

use num_complex::Complex64;

use super::{ComplexMatrix, Rng};
use crate::error::{MeshError, Result};

/// Default unitarity tolerance on `‖U^H U − I‖_F`.
pub const TOL_UNITARY: f64 = 1e-10;

/// Relative singular-value floor below which a matrix counts as singular
/// for polar projection.
pub const SINGULAR_RTOL: f64 = 1e-12;

/// A square [`ComplexMatrix`] certified unitary within [`TOL_UNITARY`].
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix(ComplexMatrix);

impl UnitaryMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(m, TOL_UNITARY)
    }

    pub fn with_tolerance(m: ComplexMatrix, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(MeshError::shape("square matrix", m.shape_str()));
        }
        let defect = m.unitarity_defect();
        if defect > tol {
            return Err(MeshError::NotUnitary { defect });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix that is unitary by construction (products of unitaries,
    /// polar factors). Checked in debug builds only.
    pub(crate) fn from_trusted(m: ComplexMatrix) -> Self {
        debug_assert!(
            m.unitarity_defect() <= 1e3 * TOL_UNITARY,
            "trusted matrix not unitary: {}",
            m.unitarity_defect()
        );
        Self(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    /// Diagonal unitary `diag(e^{iθ_k})`.
    pub fn diagonal_phases(thetas: &[f64]) -> Self {
        let d: Vec<Complex64> = thetas.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        Self(ComplexMatrix::from_diagonal(&d))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// Product of two unitaries.
    pub fn compose(&self, rhs: &UnitaryMatrix) -> Self {
        Self(self.0.matmul(&rhs.0))
    }

    /// `e^{iθ} U`.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        Self(self.0.scale(Complex64::from_polar(1.0, theta)))
    }
}

impl Deref for UnitaryMatrix {
    type Target = ComplexMatrix;

    fn deref(&self) -> &ComplexMatrix {
        &self.0
    }
}

impl AsRef<ComplexMatrix> for UnitaryMatrix {
    fn as_ref(&self) -> &ComplexMatrix {
        &self.0
    }
}

/// Haar-distributed `n×n` unitary.
///
/// QR of a complex Ginibre matrix, with each column of `Q` multiplied by the
/// phase of the matching diagonal entry of `R` so the result does not depend
/// on the QR sign convention.
pub fn haar_random_unitary(n: usize, rng: &mut Rng) -> Result<UnitaryMatrix> {
    if n == 0 {
        return Err(MeshError::InvalidDimension(
            "Haar unitary needs n >= 1".into(),
        ));
    }
    let mut z = ComplexMatrix::zeros(n, n);
    for v in z.as_mut_slice() {
        *v = rng.complex_normal();
    }
    let qr = z.to_nalgebra().qr();
    let r = qr.r();
    let mut q = ComplexMatrix::from_nalgebra(&qr.q());
    let phases: Vec<Complex64> = (0..n)
        .map(|k| {
            let d = r[(k, k)];
            let m = d.norm();
            if m > 0.0 {
                d / m
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .collect();
    q.scale_cols(&phases);
    Ok(UnitaryMatrix::from_trusted(q))
}

/// Unitary factor `V` of the polar decomposition `A = H V`.
///
/// With the SVD `A = W Σ Z^H`, `V = W Z^H`; this is the unitary closest to
/// `A` in Frobenius norm. Fails when the smallest singular value is below
/// [`SINGULAR_RTOL`] times the largest.
pub fn polar_unitary_factor(a: &ComplexMatrix) -> Result<UnitaryMatrix> {
    if !a.is_square() {
        return Err(MeshError::shape("square matrix", a.shape_str()));
    }
    if !a.all_finite() {
        return Err(MeshError::NonFinite("polar decomposition input".into()));
    }
    let svd = a.to_nalgebra().svd(true, true);
    let max_singular = svd.singular_values.max();
    let min_singular = svd.singular_values.min();
    if !(min_singular > SINGULAR_RTOL * max_singular) {
        return Err(MeshError::Singular {
            min_singular,
            max_singular,
        });
    }
    let (w, z_h) = match (svd.u, svd.v_t) {
        (Some(w), Some(z_h)) => (w, z_h),
        _ => unreachable!("svd requested with both factors"),
    };
    Ok(UnitaryMatrix::from_trusted(ComplexMatrix::from_nalgebra(
        &(w * z_h),
    )))
}

/// Noisy copy of `u`: the polar projection of `u + α (X + iY)` with `X`, `Y`
/// real matrices of independent standard normals.
///
/// `X` is drawn first, then `Y`, both row-major. Noise is drawn even for
/// `α = 0` so the random stream advances identically for every `α`.
pub fn perturb_unitary(u: &UnitaryMatrix, alpha: f64, rng: &mut Rng) -> Result<UnitaryMatrix> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(MeshError::InvalidInput(format!(
            "noise amplitude must be finite and >= 0, got {alpha}"
        )));
    }
    let n = u.dim();
    let x: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
    let y: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
    let mut a = u.as_matrix().clone();
    for ((z, &xr), &yi) in a.as_mut_slice().iter_mut().zip(&x).zip(&y) {
        *z += Complex64::new(alpha * xr, alpha * yi);
    }
    polar_unitary_factor(&a)
}
