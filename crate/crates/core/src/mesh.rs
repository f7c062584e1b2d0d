//! Layered interferometer model.
//!
//! A mesh with `N` modes and `L` mixing layers implements
//!
//! ```text
//! U = Φ_{L+1} U_L Φ_L … Φ_2 U_1 Φ_1,    Φ_ℓ = diag(e^{iφ_ℓ1}, …, e^{iφ_ℓN})
//! ```
//!
//! In code all indices are zero-based: phase layer `l ∈ 0..=L` is `Φ_{l+1}`
//! and basis index `l ∈ 0..L` is `U_{l+1}`.
//!
//! Gradients are built from two pairs of partial-product chains,
//!
//! ```text
//! U = A_ℓ U_ℓ B_ℓ     (one pair per basis matrix)
//! U = C_ℓ Φ_ℓ D_ℓ     (one pair per phase layer)
//! ```
//!
//! For `J = (1/N) Σ |u_ij − t_ij|²` and residual `E = U − T`:
//!
//! * `∂J/∂x_ij^(ℓ) = Re G_ℓ[i,j]`, `∂J/∂y_ij^(ℓ) = Im G_ℓ[i,j]` with
//!   `G_ℓ = (2/N) A_ℓ^H E B_ℓ^H`;
//! * `∂J/∂φ_ℓk = (2/N) Re( i e^{iφ_ℓk} Σ_ij conj(E_ij) C_ℓ[i,k] D_ℓ[k,j] )`.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{MeshError, Result};
use crate::matcore::{ComplexMatrix, Rng, UnitaryMatrix, TOL_UNITARY};

/// Wraps a phase into `[0, 2π)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Grid of phase shifts, one row per phase layer, stored wrapped to `[0, 2π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSchedule {
    layers: usize,
    modes: usize,
    values: Vec<f64>,
}

impl PhaseSchedule {
    /// Row-major `layers × modes` values in radians; wrapped on construction.
    pub fn new(layers: usize, modes: usize, values: Vec<f64>) -> Result<Self> {
        if layers == 0 || modes == 0 {
            return Err(MeshError::InvalidDimension(format!(
                "phase schedule must be at least 1x1, got {layers}x{modes}"
            )));
        }
        if values.len() != layers * modes {
            return Err(MeshError::shape(
                format!("{} phases ({layers}x{modes})", layers * modes),
                format!("{}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite("phase value".into()));
        }
        Ok(Self {
            layers,
            modes,
            values: values.into_iter().map(wrap_phase).collect(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let layers = rows.len();
        let modes = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != modes) {
            return Err(MeshError::shape(
                format!("{modes} phases per layer"),
                format!("{}", bad.len()),
            ));
        }
        Self::new(layers, modes, rows.concat())
    }

    pub fn zeros(layers: usize, modes: usize) -> Self {
        Self {
            layers,
            modes,
            values: vec![0.0; layers * modes],
        }
    }

    /// Independent uniform phases on `[0, 2π)`, drawn row-major.
    pub fn random(layers: usize, modes: usize, rng: &mut Rng) -> Self {
        let values = (0..layers * modes)
            .map(|_| wrap_phase(rng.uniform_range(0.0, TAU)))
            .collect();
        Self {
            layers,
            modes,
            values,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layers
    }

    pub fn n_modes(&self) -> usize {
        self.modes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, layer: usize, mode: usize) -> f64 {
        self.values[layer * self.modes + mode]
    }

    pub fn row(&self, layer: usize) -> &[f64] {
        &self.values[layer * self.modes..(layer + 1) * self.modes]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.modes).map(<[f64]>::to_vec).collect()
    }
}

/// The learnable interferometer model: `L` basis matrices of size `N×N`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshModel {
    n_modes: usize,
    basis: Vec<UnitaryMatrix>,
}

impl MeshModel {
    pub fn new(basis: Vec<UnitaryMatrix>) -> Result<Self> {
        let first = basis.first().ok_or_else(|| {
            MeshError::InvalidDimension("a mesh needs at least one basis matrix".into())
        })?;
        let n_modes = first.dim();
        for (l, u) in basis.iter().enumerate() {
            if u.dim() != n_modes {
                return Err(MeshError::shape(
                    format!("{n_modes}x{n_modes} basis matrix"),
                    format!("{} at layer {l}", u.shape_str()),
                ));
            }
            let defect = u.unitarity_defect();
            if defect > TOL_UNITARY {
                return Err(MeshError::NotUnitary { defect });
            }
        }
        Ok(Self { n_modes, basis })
    }

    /// Mesh whose every basis matrix is the identity.
    pub fn identity(n_modes: usize, n_mixers: usize) -> Self {
        Self {
            n_modes,
            basis: vec![UnitaryMatrix::identity(n_modes); n_mixers],
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_mixers(&self) -> usize {
        self.basis.len()
    }

    /// Number of phase layers, `L + 1`.
    pub fn n_phase_layers(&self) -> usize {
        self.basis.len() + 1
    }

    pub fn basis(&self) -> &[UnitaryMatrix] {
        &self.basis
    }

    pub fn into_basis(self) -> Vec<UnitaryMatrix> {
        self.basis
    }

    pub(crate) fn raw_basis(&self) -> Vec<ComplexMatrix> {
        self.basis.iter().map(|u| u.as_matrix().clone()).collect()
    }

    /// Errors unless `phases` is `(L+1) × N`.
    pub fn check_phases(&self, phases: &PhaseSchedule) -> Result<()> {
        if phases.n_layers() != self.n_phase_layers() || phases.n_modes() != self.n_modes {
            return Err(MeshError::shape(
                format!("{}x{} phase schedule", self.n_phase_layers(), self.n_modes),
                format!("{}x{}", phases.n_layers(), phases.n_modes()),
            ));
        }
        Ok(())
    }

    fn check_target(&self, target: &ComplexMatrix) -> Result<()> {
        if target.rows() != self.n_modes || target.cols() != self.n_modes {
            return Err(MeshError::shape(
                format!("{n}x{n} target", n = self.n_modes),
                target.shape_str(),
            ));
        }
        Ok(())
    }
}

/// `A_ℓ` and `B_ℓ` for every basis index.
#[derive(Clone, Debug)]
pub struct AbChains {
    pub a: Vec<ComplexMatrix>,
    pub b: Vec<ComplexMatrix>,
}

/// `C_ℓ` and `D_ℓ` for every phase layer.
#[derive(Clone, Debug)]
pub struct CdChains {
    pub c: Vec<ComplexMatrix>,
    pub d: Vec<ComplexMatrix>,
}

/// Gradient of `J` with respect to the basis entries; see [`grad_basis`].
#[derive(Clone, Debug)]
pub struct GradBasis {
    pub layers: Vec<ComplexMatrix>,
}

impl GradBasis {
    /// `∂J/∂x_ij` of basis `layer`.
    pub fn d_re(&self, layer: usize, i: usize, j: usize) -> f64 {
        self.layers[layer][(i, j)].re
    }

    /// `∂J/∂y_ij` of basis `layer`.
    pub fn d_im(&self, layer: usize, i: usize, j: usize) -> f64 {
        self.layers[layer][(i, j)].im
    }
}

/// Gradient of `J` with respect to every phase, shaped like the schedule.
#[derive(Clone, Debug)]
pub struct GradPhases {
    layers: usize,
    modes: usize,
    values: Vec<f64>,
}

impl GradPhases {
    pub fn get(&self, layer: usize, mode: usize) -> f64 {
        self.values[layer * self.modes + mode]
    }

    pub fn n_layers(&self) -> usize {
        self.layers
    }

    pub fn n_modes(&self) -> usize {
        self.modes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

// ---------------------------------------------------------------------------
// Raw kernels. Basis matrices here need not be unitary: the learning stage
// evaluates them at arbitrary complex parameters.
// ---------------------------------------------------------------------------

pub(crate) fn phase_factors(phases: &[f64]) -> Vec<Complex64> {
    phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect()
}

#[inline]
fn layer(factors: &[Complex64], n: usize, l: usize) -> &[Complex64] {
    &factors[l * n..(l + 1) * n]
}

pub(crate) fn forward_raw(basis: &[ComplexMatrix], factors: &[Complex64], n: usize) -> ComplexMatrix {
    let mut acc = ComplexMatrix::from_diagonal(layer(factors, n, 0));
    for (l, u) in basis.iter().enumerate() {
        acc = u.matmul(&acc);
        acc.scale_rows(layer(factors, n, l + 1));
    }
    acc
}

pub(crate) fn chain_ab_raw(basis: &[ComplexMatrix], factors: &[Complex64], n: usize) -> AbChains {
    let depth = basis.len();
    let mut b = Vec::with_capacity(depth);
    b.push(ComplexMatrix::from_diagonal(layer(factors, n, 0)));
    for l in 1..depth {
        let mut next = basis[l - 1].matmul(&b[l - 1]);
        next.scale_rows(layer(factors, n, l));
        b.push(next);
    }

    let mut a = vec![ComplexMatrix::zeros(n, n); depth];
    a[depth - 1] = ComplexMatrix::from_diagonal(layer(factors, n, depth));
    for l in (0..depth - 1).rev() {
        let mut next = a[l + 1].matmul(&basis[l + 1]);
        next.scale_cols(layer(factors, n, l + 1));
        a[l] = next;
    }
    AbChains { a, b }
}

pub(crate) fn chain_cd_raw(basis: &[ComplexMatrix], factors: &[Complex64], n: usize) -> CdChains {
    let depth = basis.len();
    let mut c = vec![ComplexMatrix::zeros(n, n); depth + 1];
    c[depth] = ComplexMatrix::identity(n);
    for l in (0..depth).rev() {
        let mut scaled = c[l + 1].clone();
        scaled.scale_cols(layer(factors, n, l + 1));
        c[l] = scaled.matmul(&basis[l]);
    }

    let mut d = Vec::with_capacity(depth + 1);
    d.push(ComplexMatrix::identity(n));
    for l in 1..=depth {
        let mut scaled = d[l - 1].clone();
        scaled.scale_rows(layer(factors, n, l - 1));
        d.push(basis[l - 1].matmul(&scaled));
    }
    CdChains { c, d }
}

fn figure_of_merit(residual: &ComplexMatrix) -> f64 {
    residual.norm_sqr() / residual.rows() as f64
}

/// `J` and the per-layer gradient matrices `G_ℓ` for raw basis matrices.
pub(crate) fn basis_objective(
    basis: &[ComplexMatrix],
    factors: &[Complex64],
    target: &ComplexMatrix,
) -> (f64, Vec<ComplexMatrix>) {
    let n = target.rows();
    let depth = basis.len();
    let chains = chain_ab_raw(basis, factors, n);
    let mut u = basis[depth - 1].matmul(&chains.b[depth - 1]);
    u.scale_rows(layer(factors, n, depth));
    let residual = &u - target;
    let j = figure_of_merit(&residual);
    let scale = Complex64::new(2.0 / n as f64, 0.0);
    let grads = chains
        .a
        .iter()
        .zip(&chains.b)
        .map(|(a, b)| a.adjoint().matmul(&residual).matmul(&b.adjoint()).scale(scale))
        .collect();
    (j, grads)
}

/// `J` and `∂J/∂φ` (flattened like the phase schedule) for raw basis matrices.
pub(crate) fn phase_objective(
    basis: &[ComplexMatrix],
    factors: &[Complex64],
    target: &ComplexMatrix,
) -> (f64, Vec<f64>) {
    let n = target.rows();
    let chains = chain_cd_raw(basis, factors, n);
    // U = C_{L+1} Φ_{L+1} D_{L+1} with C_{L+1} = I.
    let depth = basis.len();
    let mut u = chains.d[depth].clone();
    u.scale_rows(layer(factors, n, depth));
    let residual = &u - target;
    let j = figure_of_merit(&residual);
    let conj_residual =
        ComplexMatrix::from_fn(n, n, |i, jj| residual[(i, jj)].conj());

    let mut grad = Vec::with_capacity(factors.len());
    for (l, (c, d)) in chains.c.iter().zip(&chains.d).enumerate() {
        // P = C^T conj(E); s_k = Σ_j D[k,j] P[k,j]
        let p = c.transpose().matmul(&conj_residual);
        for k in 0..n {
            let s: Complex64 = d.row(k).iter().zip(p.row(k)).map(|(x, y)| x * y).sum();
            let f = factors[l * n + k];
            grad.push(2.0 / n as f64 * (Complex64::i() * f * s).re);
        }
    }
    (j, grad)
}

// ---------------------------------------------------------------------------
// Public operations on validated models.
// ---------------------------------------------------------------------------

/// Evaluates the mesh at the given phases.
pub fn forward(model: &MeshModel, phases: &PhaseSchedule) -> Result<UnitaryMatrix> {
    model.check_phases(phases)?;
    let factors = phase_factors(phases.values());
    let u = forward_raw(&model.raw_basis(), &factors, model.n_modes());
    Ok(UnitaryMatrix::from_trusted(u))
}

/// Partial products with `U = A_ℓ U_ℓ B_ℓ` for every basis index.
pub fn chain_ab(model: &MeshModel, phases: &PhaseSchedule) -> Result<AbChains> {
    model.check_phases(phases)?;
    let factors = phase_factors(phases.values());
    Ok(chain_ab_raw(&model.raw_basis(), &factors, model.n_modes()))
}

/// Partial products with `U = C_ℓ Φ_ℓ D_ℓ` for every phase layer.
pub fn chain_cd(model: &MeshModel, phases: &PhaseSchedule) -> Result<CdChains> {
    model.check_phases(phases)?;
    let factors = phase_factors(phases.values());
    Ok(chain_cd_raw(&model.raw_basis(), &factors, model.n_modes()))
}

/// Gradient of `J(forward(model, phases), target)` with respect to the real
/// and imaginary parts of every basis entry.
pub fn grad_basis(
    model: &MeshModel,
    phases: &PhaseSchedule,
    target: &ComplexMatrix,
) -> Result<GradBasis> {
    model.check_phases(phases)?;
    model.check_target(target)?;
    let factors = phase_factors(phases.values());
    let (_, layers) = basis_objective(&model.raw_basis(), &factors, target);
    Ok(GradBasis { layers })
}

/// Gradient of `J(forward(model, phases), target)` with respect to every
/// phase shift.
pub fn grad_phases(
    model: &MeshModel,
    phases: &PhaseSchedule,
    target: &ComplexMatrix,
) -> Result<GradPhases> {
    model.check_phases(phases)?;
    model.check_target(target)?;
    let factors = phase_factors(phases.values());
    let (_, values) = phase_objective(&model.raw_basis(), &factors, target);
    Ok(GradPhases {
        layers: phases.n_layers(),
        modes: phases.n_modes(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{frobenius_distance, haar_random_unitary};

    fn random_model(n: usize, depth: usize, rng: &mut Rng) -> MeshModel {
        MeshModel::new(
            (0..depth)
                .map(|_| haar_random_unitary(n, rng).unwrap())
                .collect(),
        )
        .unwrap()
    }

    /// Dense product with explicitly materialised diagonal phase matrices.
    fn naive_forward(basis: &[ComplexMatrix], phases: &[f64], n: usize) -> ComplexMatrix {
        let diag = |l: usize| {
            ComplexMatrix::from_diagonal(
                &phases[l * n..(l + 1) * n]
                    .iter()
                    .map(|&p| Complex64::from_polar(1.0, p))
                    .collect::<Vec<_>>(),
            )
        };
        let mut acc = diag(0);
        for (l, u) in basis.iter().enumerate() {
            acc = diag(l + 1).matmul(&u.matmul(&acc));
        }
        acc
    }

    fn naive_j(basis: &[ComplexMatrix], phases: &[f64], target: &ComplexMatrix) -> f64 {
        let n = target.rows();
        let u = naive_forward(basis, phases, n);
        u.as_slice()
            .iter()
            .zip(target.as_slice())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(0.0), 0.0);
        assert!((wrap_phase(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        assert!((wrap_phase(7.0) - (7.0 - TAU)).abs() < 1e-15);
        let w = wrap_phase(-1e-300);
        assert!((0.0..TAU).contains(&w));
    }

    #[test]
    fn schedule_validation() {
        assert!(PhaseSchedule::new(2, 2, vec![0.0; 3]).is_err());
        assert!(PhaseSchedule::new(0, 2, vec![]).is_err());
        assert!(PhaseSchedule::new(1, 1, vec![f64::INFINITY]).is_err());
        assert!(PhaseSchedule::from_rows(&[vec![0.0, 1.0], vec![2.0]]).is_err());
        let p = PhaseSchedule::from_rows(&[vec![0.0, -1.0], vec![10.0, 3.0]]).unwrap();
        assert!(p.values().iter().all(|v| (0.0..TAU).contains(v)));
    }

    #[test]
    fn identity_model_zero_phases() {
        let model = MeshModel::identity(3, 3);
        let phases = PhaseSchedule::zeros(4, 3);
        let u = forward(&model, &phases).unwrap();
        assert!(u.max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);

        let ab = chain_ab(&model, &phases).unwrap();
        let cd = chain_cd(&model, &phases).unwrap();
        for m in ab.a.iter().chain(&ab.b).chain(&cd.c).chain(&cd.d) {
            assert!(m.max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);
        }
    }

    #[test]
    fn scalar_mesh() {
        let u = UnitaryMatrix::diagonal_phases(&[0.7]);
        let model = MeshModel::new(vec![u]).unwrap();
        let phases = PhaseSchedule::new(2, 1, vec![0.3, 1.1]).unwrap();
        let out = forward(&model, &phases).unwrap();
        let expected = Complex64::from_polar(1.0, 0.3 + 1.1 + 0.7);
        assert!((out[(0, 0)] - expected).norm() < 1e-15);
    }

    #[test]
    fn forward_matches_naive_product() {
        let mut rng = Rng::new(10);
        let model = random_model(3, 3, &mut rng);
        let phases = PhaseSchedule::random(4, 3, &mut rng);
        let fast = forward(&model, &phases).unwrap();
        let slow = naive_forward(&model.raw_basis(), phases.values(), 3);
        assert!(fast.max_abs_diff(&slow) < 1e-13);
        assert!(fast.unitarity_defect() < 1e-10);
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let model = MeshModel::identity(3, 3);
        assert!(matches!(
            forward(&model, &PhaseSchedule::zeros(3, 3)),
            Err(MeshError::Shape { .. })
        ));
        assert!(matches!(
            grad_basis(&model, &PhaseSchedule::zeros(4, 3), &ComplexMatrix::identity(2)),
            Err(MeshError::Shape { .. })
        ));
    }

    #[test]
    fn model_validation() {
        assert!(MeshModel::new(vec![]).is_err());
        assert!(MeshModel::new(vec![UnitaryMatrix::identity(2), UnitaryMatrix::identity(3)]).is_err());
    }

    #[test]
    fn chain_base_cases_single_layer() {
        let mut rng = Rng::new(12);
        let model = random_model(3, 1, &mut rng);
        let phases = PhaseSchedule::random(2, 3, &mut rng);
        let ab = chain_ab(&model, &phases).unwrap();
        let phi1 = UnitaryMatrix::diagonal_phases(phases.row(0));
        let phi2 = UnitaryMatrix::diagonal_phases(phases.row(1));
        assert!(ab.a[0].max_abs_diff(&phi2) < 1e-15);
        assert!(ab.b[0].max_abs_diff(&phi1) < 1e-15);
        let cd = chain_cd(&model, &phases).unwrap();
        assert!(cd.c[1].max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);
        assert!(cd.d[0].max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);
    }

    #[test]
    fn chain_identities_hold() {
        let mut rng = Rng::new(13);
        let model = random_model(4, 4, &mut rng);
        let phases = PhaseSchedule::random(5, 4, &mut rng);
        let u = forward(&model, &phases).unwrap();
        let ab = chain_ab(&model, &phases).unwrap();
        for (l, ul) in model.basis().iter().enumerate() {
            let rebuilt = ab.a[l].matmul(ul).matmul(&ab.b[l]);
            assert!((&rebuilt - u.as_matrix()).frobenius_norm() < 1e-10);
        }
        let cd = chain_cd(&model, &phases).unwrap();
        for l in 0..=model.n_mixers() {
            let phi = UnitaryMatrix::diagonal_phases(phases.row(l));
            let rebuilt = cd.c[l].matmul(&phi).matmul(&cd.d[l]);
            assert!((&rebuilt - u.as_matrix()).frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn gradients_vanish_at_target() {
        let mut rng = Rng::new(14);
        let model = random_model(3, 3, &mut rng);
        let phases = PhaseSchedule::random(4, 3, &mut rng);
        let target = forward(&model, &phases).unwrap();
        let gb = grad_basis(&model, &phases, &target).unwrap();
        assert!(gb.layers.iter().all(|g| g.as_slice().iter().all(|z| z.norm() < 1e-12)));
        let gp = grad_phases(&model, &phases, &target).unwrap();
        assert!(gp.values().iter().all(|g| g.abs() < 1e-12));
    }

    /// Direct per-entry formula: ∂U/∂x_ij = A Δ^(ij) B, ∂U/∂y_ij = i A Δ^(ij) B,
    /// each contracted with conj(E) as (2/N) Re Σ conj(E) ⊙ ∂U.
    #[test]
    fn contracted_basis_gradient_matches_delta_construction() {
        let mut rng = Rng::new(15);
        let n = 3;
        let model = random_model(n, n, &mut rng);
        let phases = PhaseSchedule::random(n + 1, n, &mut rng);
        let target = haar_random_unitary(n, &mut rng).unwrap();
        let u = forward(&model, &phases).unwrap();
        let residual = u.as_matrix() - target.as_matrix();
        let ab = chain_ab(&model, &phases).unwrap();
        let g = grad_basis(&model, &phases, &target).unwrap();

        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut delta = ComplexMatrix::zeros(n, n);
                    delta[(i, j)] = Complex64::new(1.0, 0.0);
                    let du = ab.a[l].matmul(&delta).matmul(&ab.b[l]);
                    let contract = |d: &ComplexMatrix| -> f64 {
                        2.0 / n as f64
                            * residual
                                .as_slice()
                                .iter()
                                .zip(d.as_slice())
                                .map(|(e, x)| (e.conj() * x).re)
                                .sum::<f64>()
                    };
                    let dx = contract(&du);
                    let dy = contract(&du.scale(Complex64::i()));
                    assert!((dx - g.d_re(l, i, j)).abs() < 1e-12);
                    assert!((dy - g.d_im(l, i, j)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn basis_gradient_matches_finite_differences() {
        let mut rng = Rng::new(16);
        let n = 3;
        let model = random_model(n, n, &mut rng);
        let phases = PhaseSchedule::random(n + 1, n, &mut rng);
        let target = haar_random_unitary(n, &mut rng).unwrap();
        let g = grad_basis(&model, &phases, &target).unwrap();
        let basis = model.raw_basis();
        let h = 1e-6;
        for l in 0..n {
            for idx in 0..n * n {
                for (dir, analytic) in [
                    (Complex64::new(h, 0.0), g.layers[l].as_slice()[idx].re),
                    (Complex64::new(0.0, h), g.layers[l].as_slice()[idx].im),
                ] {
                    let mut plus = basis.clone();
                    plus[l].as_mut_slice()[idx] += dir;
                    let mut minus = basis.clone();
                    minus[l].as_mut_slice()[idx] -= dir;
                    let fd = (naive_j(&plus, phases.values(), &target)
                        - naive_j(&minus, phases.values(), &target))
                        / (2.0 * h);
                    assert!((fd - analytic).abs() <= 1e-5 * fd.abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn phase_gradient_single_mode() {
        // U = e^{i(φ1+φ2)} u, target −u at φ = 0 gives E = 2u and
        // ∂J/∂φ1 = 2 Re(conj(2u) · i u) = 4 |u|² Re(i) = 0.
        let u = UnitaryMatrix::diagonal_phases(&[0.4]);
        let model = MeshModel::new(vec![u.clone()]).unwrap();
        let phases = PhaseSchedule::zeros(2, 1);
        let target = u.scale(Complex64::new(-1.0, 0.0));
        let g = grad_phases(&model, &phases, &target).unwrap();
        let analytic = 2.0 * ((u[(0, 0)] * 2.0).conj() * Complex64::i() * u[(0, 0)]).re;
        assert!((g.get(0, 0) - analytic).abs() < 1e-15);

        // Off the stationary point: J(φ1) = 2 − 2 Re(e^{iφ1} u conj(t)).
        let phases = PhaseSchedule::new(2, 1, vec![0.9, 0.2]).unwrap();
        let g = grad_phases(&model, &phases, &target).unwrap();
        let h = 1e-6;
        let j_at = |p1: f64| naive_j(&model.raw_basis(), &[p1, 0.2], &target);
        let fd = (j_at(0.9 + h) - j_at(0.9 - h)) / (2.0 * h);
        assert!((g.get(0, 0) - fd).abs() < 1e-8, "{} vs {fd}", g.get(0, 0));
        assert!((g.get(0, 0) - g.get(1, 0)).abs() < 1e-14);
    }

    #[test]
    fn phase_gradient_zero_at_scalar_solution() {
        let u = UnitaryMatrix::diagonal_phases(&[2.0]);
        let model = MeshModel::new(vec![u.clone()]).unwrap();
        let phases = PhaseSchedule::new(2, 1, vec![0.5, 1.5]).unwrap();
        let target = u.with_global_phase(2.0);
        let g = grad_phases(&model, &phases, &target).unwrap();
        assert!(g.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn phase_gradient_matches_finite_differences() {
        let mut rng = Rng::new(17);
        for n in [2, 3, 5] {
            let model = random_model(n, n, &mut rng);
            let phases = PhaseSchedule::random(n + 1, n, &mut rng);
            let target = haar_random_unitary(n, &mut rng).unwrap();
            let g = grad_phases(&model, &phases, &target).unwrap();
            let basis = model.raw_basis();
            let h = 1e-6;
            for idx in 0..phases.values().len() {
                let mut plus = phases.values().to_vec();
                plus[idx] += h;
                let mut minus = phases.values().to_vec();
                minus[idx] -= h;
                let fd = (naive_j(&basis, &plus, &target) - naive_j(&basis, &minus, &target))
                    / (2.0 * h);
                let a = g.values()[idx];
                assert!((fd - a).abs() <= 1e-5 * fd.abs().max(1e-3), "n={n} {a} vs {fd}");
            }
        }
    }

    #[test]
    fn gauge_freedom_leaves_output_unchanged() {
        let mut rng = Rng::new(18);
        let n = 4;
        let model = random_model(n, n, &mut rng);
        let phases = PhaseSchedule::random(n + 1, n, &mut rng);
        let reference = forward(&model, &phases).unwrap();

        // U_{l+1} -> U_{l+1} D together with Φ_{l+1} -> D^H Φ_{l+1}.
        let l = 1;
        let theta: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.0, TAU)).collect();
        let gauge = UnitaryMatrix::diagonal_phases(&theta);
        let mut basis = model.basis().to_vec();
        basis[l + 1] = basis[l + 1].compose(&gauge);
        let shifted = MeshModel::new(basis).unwrap();
        let mut rows = phases.to_rows();
        for (p, t) in rows[l + 1].iter_mut().zip(&theta) {
            *p -= t;
        }
        let phases2 = PhaseSchedule::from_rows(&rows).unwrap();
        let moved = forward(&shifted, &phases2).unwrap();
        assert!(frobenius_distance(&moved, &reference).unwrap() < 1e-24);
        assert!(moved.max_abs_diff(&reference) < 1e-12);
    }
}
