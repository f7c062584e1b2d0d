//! Training stage: dataset synthesis, model fitting and cross-validation.
//!
//! Basis matrices are fitted as unconstrained complex matrices by minimising
//! the mini-batch mean of `J` with L-BFGS; after each inner solve every basis
//! matrix is projected back to its nearest unitary.

use num_complex::Complex64;

use crate::error::{MeshError, Result};
use crate::matcore::{
    frobenius_distance, haar_random_unitary, perturb_unitary, polar_unitary_factor, ComplexMatrix,
    Rng, UnitaryMatrix,
};
use crate::mesh::{basis_objective, forward, forward_raw, phase_factors, MeshModel, PhaseSchedule};
use crate::optim::{minimize, ObjectiveEval, OptimizerConfig};

/// Stream of the training seed used for mini-batch draws.
const MINIBATCH_STREAM: u64 = 0x6d62;

/// Programmed phases and the unitary the device produced for them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub phases: PhaseSchedule,
    pub observed: UnitaryMatrix,
}

/// Where a dataset came from. Seeds are known only when the generating
/// caller records them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    pub device_seed: Option<u64>,
    pub generation_seed: Option<u64>,
    pub alpha: f64,
}

/// Non-empty collection of pairs of one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pairs: Vec<TrainingPair>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(pairs: Vec<TrainingPair>, provenance: Provenance) -> Result<Self> {
        let first = pairs
            .first()
            .ok_or_else(|| MeshError::InvalidInput("dataset must not be empty".into()))?;
        let n = first.observed.dim();
        let layers = first.phases.n_layers();
        for (i, p) in pairs.iter().enumerate() {
            if p.observed.dim() != n || p.phases.n_modes() != n || p.phases.n_layers() != layers {
                return Err(MeshError::shape(
                    format!("pair with {n} modes and {layers} phase layers"),
                    format!(
                        "pair {i}: {} unitary, {}x{} phases",
                        p.observed.shape_str(),
                        p.phases.n_layers(),
                        p.phases.n_modes()
                    ),
                ));
            }
        }
        Ok(Self { pairs, provenance })
    }

    pub fn pairs(&self) -> &[TrainingPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.pairs[0].observed.dim()
    }

    pub fn n_phase_layers(&self) -> usize {
        self.pairs[0].phases.n_layers()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn set_provenance(&mut self, provenance: Provenance) {
        self.provenance = provenance;
    }

    fn check_model(&self, model: &MeshModel) -> Result<()> {
        if self.n_modes() != model.n_modes() || self.n_phase_layers() != model.n_phase_layers() {
            return Err(MeshError::shape(
                format!(
                    "dataset for {} modes / {} phase layers",
                    model.n_modes(),
                    model.n_phase_layers()
                ),
                format!(
                    "{} modes / {} phase layers",
                    self.n_modes(),
                    self.n_phase_layers()
                ),
            ));
        }
        Ok(())
    }
}

/// When basis matrices are projected back onto the unitary group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionPolicy {
    /// After the inner solve of every epoch.
    PerEpoch,
    /// After every inner iteration; the solver restarts (and loses its
    /// curvature history) at each projection.
    PerIteration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnConfig {
    pub minibatch_size: usize,
    pub epochs: usize,
    pub inner_iterations: usize,
    pub cv_threshold: f64,
    pub optimizer: OptimizerConfig,
    pub projection: ProjectionPolicy,
    /// Stop once the test `J` is at or below this value.
    pub early_stop: Option<f64>,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            minibatch_size: 5,
            epochs: 1000,
            inner_iterations: 20,
            cv_threshold: 1e-2,
            optimizer: OptimizerConfig::default(),
            projection: ProjectionPolicy::PerEpoch,
            early_stop: Some(1e-20),
            seed: 0,
        }
    }
}

impl LearnConfig {
    /// Epoch budget by mesh size: 1000 up to five modes, 3000 beyond.
    pub fn default_epochs(n_modes: usize) -> usize {
        if n_modes <= 5 {
            1000
        } else {
            3000
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean `J` over the epoch's mini-batch after projection (epoch 0: the
    /// whole training set).
    pub j_train: f64,
    pub j_test: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<EpochRecord>,
}

impl ConvergenceTrace {
    /// Lowest test `J` and the epoch it was recorded at.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.records
            .iter()
            .fold(None, |acc: Option<(usize, f64)>, r| match acc {
                Some((_, j)) if j <= r.j_test => acc,
                _ => Some((r.epoch, r.j_test)),
            })
    }

    pub fn best_test_j(&self) -> f64 {
        self.best().map_or(f64::INFINITY, |(_, j)| j)
    }

    /// Running minimum of the test `J`, one entry per record.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(f64::INFINITY, |best, r| {
                *best = best.min(r.j_test);
                Some(*best)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossValidationReport {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Samples `count` pairs from `device`: uniform phases on `[0, 2π)` and the
/// ideal output perturbed with noise amplitude `alpha` (fresh noise per pair).
pub fn generate_dataset(
    device: &MeshModel,
    count: usize,
    alpha: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if count == 0 {
        return Err(MeshError::InvalidInput("dataset size must be >= 1".into()));
    }
    let (layers, n) = (device.n_phase_layers(), device.n_modes());
    let pairs = (0..count)
        .map(|_| {
            let phases = PhaseSchedule::random(layers, n, rng);
            let ideal = forward(device, &phases)?;
            let observed = perturb_unitary(&ideal, alpha, rng)?;
            Ok(TrainingPair { phases, observed })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        pairs,
        Provenance {
            alpha,
            ..Provenance::default()
        },
    )
}

/// Mesh with Haar-random basis matrices.
pub fn init_black_box(n_modes: usize, n_mixers: usize, rng: &mut Rng) -> Result<MeshModel> {
    if n_mixers == 0 {
        return Err(MeshError::InvalidDimension("mesh needs >= 1 mixing layer".into()));
    }
    let basis = (0..n_mixers)
        .map(|_| haar_random_unitary(n_modes, rng))
        .collect::<Result<Vec<_>>>()?;
    MeshModel::new(basis)
}

/// Starting guess near `reference`: each basis matrix perturbed with noise
/// amplitude `alpha`. `alpha == 0` returns the reference unchanged.
pub fn init_a_priori(reference: &MeshModel, alpha: f64, rng: &mut Rng) -> Result<MeshModel> {
    if alpha == 0.0 {
        return Ok(reference.clone());
    }
    let basis = reference
        .basis()
        .iter()
        .map(|u| perturb_unitary(u, alpha, rng))
        .collect::<Result<Vec<_>>>()?;
    MeshModel::new(basis)
}

/// Interleaved `[re, im]` of every basis entry, layer by layer, row-major.
pub(crate) fn flatten_basis(basis: &[ComplexMatrix]) -> Vec<f64> {
    basis
        .iter()
        .flat_map(|m| m.as_slice().iter().flat_map(|z| [z.re, z.im]))
        .collect()
}

pub(crate) fn unflatten_basis(params: &[f64], n: usize, depth: usize) -> Vec<ComplexMatrix> {
    debug_assert_eq!(params.len(), 2 * n * n * depth);
    params
        .chunks_exact(2 * n * n)
        .take(depth)
        .map(|chunk| {
            ComplexMatrix::from_fn(n, n, |i, j| {
                let k = 2 * (i * n + j);
                Complex64::new(chunk[k], chunk[k + 1])
            })
        })
        .collect()
}

struct Prepared<'a> {
    factors: Vec<Vec<Complex64>>,
    targets: Vec<&'a ComplexMatrix>,
}

impl<'a> Prepared<'a> {
    fn new(data: &'a Dataset) -> Self {
        Self {
            factors: data
                .pairs
                .iter()
                .map(|p| phase_factors(p.phases.values()))
                .collect(),
            targets: data.pairs.iter().map(|p| p.observed.as_matrix()).collect(),
        }
    }

    fn mean_j(&self, basis: &[ComplexMatrix], indices: impl Iterator<Item = usize>) -> f64 {
        let n = basis[0].rows();
        let (mut sum, mut count) = (0.0, 0usize);
        for i in indices {
            let u = forward_raw(basis, &self.factors[i], n);
            sum += (&u - self.targets[i]).norm_sqr() / n as f64;
            count += 1;
        }
        sum / count as f64
    }

    fn mean_j_all(&self, basis: &[ComplexMatrix]) -> f64 {
        self.mean_j(basis, 0..self.targets.len())
    }

    /// Mini-batch mean of `J` and its gradient in flattened coordinates;
    /// pairs are summed in batch order.
    fn batch_objective(&self, params: &[f64], batch: &[usize], n: usize, depth: usize) -> ObjectiveEval {
        let basis = unflatten_basis(params, n, depth);
        let mut value = 0.0;
        let mut gradient = vec![0.0; params.len()];
        for &i in batch {
            let (j, grads) = basis_objective(&basis, &self.factors[i], self.targets[i]);
            value += j;
            for (chunk, g) in gradient.chunks_exact_mut(2 * n * n).zip(&grads) {
                for (pair, z) in chunk.chunks_exact_mut(2).zip(g.as_slice()) {
                    pair[0] += z.re;
                    pair[1] += z.im;
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        gradient.iter_mut().for_each(|g| *g *= scale);
        ObjectiveEval {
            value: value * scale,
            gradient,
        }
    }
}

fn project(params: &[f64], n: usize, depth: usize) -> Result<Vec<UnitaryMatrix>> {
    unflatten_basis(params, n, depth)
        .iter()
        .map(polar_unitary_factor)
        .collect()
}

fn raw(basis: &[UnitaryMatrix]) -> Vec<ComplexMatrix> {
    basis.iter().map(|u| u.as_matrix().clone()).collect()
}

/// Fits basis matrices to `train`, starting from `init`.
///
/// Each epoch draws `minibatch_size` pairs uniformly with replacement, runs
/// `inner_iterations` solver iterations on the batch mean of `J`, projects the
/// basis back onto unitaries and records the test `J`. Returns the model with
/// the lowest recorded test `J` (epoch 0 is the initial model).
pub fn learn_model(
    train: &Dataset,
    test: &Dataset,
    init: &MeshModel,
    config: &LearnConfig,
) -> Result<(MeshModel, ConvergenceTrace)> {
    train.check_model(init)?;
    test.check_model(init)?;
    if config.minibatch_size == 0 {
        return Err(MeshError::InvalidInput("mini-batch size must be >= 1".into()));
    }
    if config.inner_iterations == 0 {
        return Err(MeshError::InvalidInput("inner iterations must be >= 1".into()));
    }
    config.optimizer.validate()?;

    let (n, depth) = (init.n_modes(), init.n_mixers());
    let train_data = Prepared::new(train);
    let test_data = Prepared::new(test);
    let mut rng = Rng::with_stream(config.seed, MINIBATCH_STREAM);

    let mut basis = init.basis().to_vec();
    let raw_init = raw(&basis);
    let mut trace = ConvergenceTrace {
        records: vec![EpochRecord {
            epoch: 0,
            j_train: train_data.mean_j_all(&raw_init),
            j_test: test_data.mean_j_all(&raw_init),
        }],
    };
    let mut best = (trace.records[0].j_test, basis.clone());
    let stop = |j: f64| config.early_stop.is_some_and(|t| j <= t);

    if !stop(best.0) {
        for epoch in 1..=config.epochs {
            let batch: Vec<usize> = (0..config.minibatch_size)
                .map(|_| rng.below(train.len()))
                .collect();
            let objective = |p: &[f64]| train_data.batch_objective(p, &batch, n, depth);

            let mut params = flatten_basis(&raw(&basis));
            match config.projection {
                ProjectionPolicy::PerEpoch => {
                    let inner = config
                        .optimizer
                        .clone()
                        .with_max_iterations(config.inner_iterations);
                    params = minimize(objective, &params, &inner)?.0;
                    basis = project(&params, n, depth)?;
                }
                ProjectionPolicy::PerIteration => {
                    let inner = config.optimizer.clone().with_max_iterations(1);
                    for _ in 0..config.inner_iterations {
                        params = minimize(&objective, &params, &inner)?.0;
                        basis = project(&params, n, depth)?;
                        params = flatten_basis(&raw(&basis));
                    }
                }
            }

            let raw_basis = raw(&basis);
            let record = EpochRecord {
                epoch,
                j_train: train_data.mean_j(&raw_basis, batch.iter().copied()),
                j_test: test_data.mean_j_all(&raw_basis),
            };
            trace.records.push(record);
            if record.j_test < best.0 {
                best = (record.j_test, basis.clone());
            }
            if stop(record.j_test) {
                break;
            }
        }
    }

    Ok((MeshModel::new(best.1)?, trace))
}

/// Per-pair `J` of the model against a held-out set; passes when the mean is
/// at or below `threshold`.
pub fn cross_validate(
    model: &MeshModel,
    test: &Dataset,
    threshold: f64,
) -> Result<CrossValidationReport> {
    if test.is_empty() {
        return Err(MeshError::InvalidInput("empty test set".into()));
    }
    test.check_model(model)?;
    let per_sample = test
        .pairs()
        .iter()
        .map(|p| frobenius_distance(forward(model, &p.phases)?.as_matrix(), &p.observed))
        .collect::<Result<Vec<_>>>()?;
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(CrossValidationReport {
        per_sample,
        mean,
        threshold,
        pass: mean <= threshold,
    })
}
