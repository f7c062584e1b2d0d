//! Independent oracles shared by the integration tests: a direct matrix
//! product for the mesh, an entrywise figure of merit and central finite
//! differences over both parameter sets.

#![allow(dead_code)]

use meshforge::learn::init_black_box;
use meshforge::matcore::haar_random_unitary;
use meshforge::{ComplexMatrix, MeshModel, PhaseSchedule, Rng, UnitaryMatrix};
use num_complex::Complex64;

pub const FD_STEP: f64 = 1e-6;

/// `Φ_{L+1} U_L ⋯ Φ_2 U_1 Φ_1` by explicit dense products.
pub fn naive_forward(basis: &[ComplexMatrix], phases: &[f64], n: usize) -> ComplexMatrix {
    let layer = |l: usize| {
        let diag: Vec<Complex64> = phases[l * n..(l + 1) * n]
            .iter()
            .map(|&p| Complex64::from_polar(1.0, p))
            .collect();
        ComplexMatrix::from_diagonal(&diag)
    };
    let mut u = layer(0);
    for (l, b) in basis.iter().enumerate() {
        u = layer(l + 1).matmul(&b.matmul(&u));
    }
    u
}

pub fn naive_j(u: &ComplexMatrix, t: &ComplexMatrix) -> f64 {
    let n = u.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            sum += (u[(i, j)] - t[(i, j)]).norm_sqr();
        }
    }
    sum / n as f64
}

pub fn raw_basis(model: &MeshModel) -> Vec<ComplexMatrix> {
    model.basis().iter().map(|u| u.as_matrix().clone()).collect()
}

/// Central differences of `J` over every basis entry, laid out as
/// `[layer][i][j][re, im]`.
pub fn fd_basis(basis: &[ComplexMatrix], phases: &[f64], target: &ComplexMatrix) -> Vec<f64> {
    let n = target.rows();
    let mut out = Vec::new();
    for l in 0..basis.len() {
        for i in 0..n {
            for j in 0..n {
                for dir in [Complex64::new(FD_STEP, 0.0), Complex64::new(0.0, FD_STEP)] {
                    let eval = |sign: f64| {
                        let mut b = basis.to_vec();
                        b[l][(i, j)] += dir * sign;
                        naive_j(&naive_forward(&b, phases, n), target)
                    };
                    out.push((eval(1.0) - eval(-1.0)) / (2.0 * FD_STEP));
                }
            }
        }
    }
    out
}

/// Central differences of `J` over every phase, in schedule order.
pub fn fd_phases(basis: &[ComplexMatrix], phases: &[f64], target: &ComplexMatrix) -> Vec<f64> {
    let n = target.rows();
    (0..phases.len())
        .map(|k| {
            let eval = |delta: f64| {
                let mut p = phases.to_vec();
                p[k] += delta;
                naive_j(&naive_forward(basis, &p, n), target)
            };
            (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub coordinates: usize,
    /// Coordinates with relative error at most `rel_tol`.
    pub relative_ok: usize,
    /// Largest absolute error among the remaining coordinates.
    pub worst_other_abs: f64,
}

impl GradCheck {
    pub fn new(analytic: &[f64], numeric: &[f64], rel_tol: f64) -> Self {
        assert_eq!(analytic.len(), numeric.len());
        let mut relative_ok = 0;
        let mut worst_other_abs: f64 = 0.0;
        for (&a, &f) in analytic.iter().zip(numeric) {
            let abs = (a - f).abs();
            let scale = a.abs().max(f.abs());
            if abs <= rel_tol * scale || abs == 0.0 {
                relative_ok += 1;
            } else {
                worst_other_abs = worst_other_abs.max(abs);
            }
        }
        Self {
            coordinates: analytic.len(),
            relative_ok,
            worst_other_abs,
        }
    }

    pub fn relative_fraction(&self) -> f64 {
        self.relative_ok as f64 / self.coordinates as f64
    }

    pub fn passes(&self, min_fraction: f64, abs_tol: f64) -> bool {
        self.relative_fraction() >= min_fraction && self.worst_other_abs <= abs_tol
    }
}

/// Haar model with `L = n`, uniform phases and a Haar target.
pub fn random_triple(n: usize, rng: &mut Rng) -> (MeshModel, PhaseSchedule, UnitaryMatrix) {
    let model = init_black_box(n, n, rng).unwrap();
    let phases = PhaseSchedule::random(n + 1, n, rng);
    let target = haar_random_unitary(n, rng).unwrap();
    (model, phases, target)
}

/// Analytic basis gradient in the `fd_basis` layout.
pub fn flatten_grad_basis(grad: &meshforge::mesh::GradBasis, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for l in 0..grad.layers.len() {
        for i in 0..n {
            for j in 0..n {
                out.push(grad.d_re(l, i, j));
                out.push(grad.d_im(l, i, j));
            }
        }
    }
    out
}
