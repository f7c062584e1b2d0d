//! Simulated learning experiments and parameter sweeps.
//!
//! One experiment synthesises a Haar-random device, samples a training and a
//! test set from it, fits a model and cross-validates it. All randomness is
//! derived from the experiment seed through fixed sub-streams, so an
//! experiment is reproducible from `(spec, seed)` alone.

use rayon::prelude::*;

use crate::error::{MeshError, Result};
use crate::io::fmt_f64;
use crate::learn::{
    cross_validate, generate_dataset, init_a_priori, init_black_box, learn_model,
    ConvergenceTrace, CrossValidationReport, Dataset, LearnConfig, Provenance,
};
use crate::matcore::{fidelity, frobenius_distance, haar_random_unitary, perturb_unitary, Rng};
use crate::mesh::MeshModel;

pub const DEVICE_STREAM: u64 = 1;
pub const TRAIN_STREAM: u64 = 2;
pub const TEST_STREAM: u64 = 3;
pub const INIT_STREAM: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitStrategy {
    BlackBox,
    /// Start from the true device perturbed with this noise amplitude.
    APriori { alpha: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub n_modes: usize,
    pub n_mixers: usize,
    pub train_count: usize,
    pub test_count: usize,
    /// Noise on the training unitaries.
    pub train_alpha: f64,
    /// Noise on the test unitaries.
    pub test_alpha: f64,
    pub init: InitStrategy,
    /// Learning settings; `learn.seed` is replaced by `seed`.
    pub learn: LearnConfig,
    pub seed: u64,
}

impl ExperimentSpec {
    /// Noiseless black-box experiment with `L = N` and default learning
    /// settings.
    pub fn black_box(n_modes: usize, train_count: usize, seed: u64) -> Self {
        Self {
            n_modes,
            n_mixers: n_modes,
            train_count,
            test_count: 100,
            train_alpha: 0.0,
            test_alpha: 0.0,
            init: InitStrategy::BlackBox,
            learn: LearnConfig {
                epochs: LearnConfig::default_epochs(n_modes),
                ..LearnConfig::default()
            },
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub device: MeshModel,
    pub train: Dataset,
    pub test: Dataset,
    pub init: MeshModel,
    pub model: MeshModel,
    pub trace: ConvergenceTrace,
    pub report: CrossValidationReport,
}

/// Ground-truth device of an experiment seed.
pub fn synth_device(n_modes: usize, n_mixers: usize, seed: u64) -> Result<MeshModel> {
    init_black_box(n_modes, n_mixers, &mut Rng::with_stream(seed, DEVICE_STREAM))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let device = synth_device(spec.n_modes, spec.n_mixers, spec.seed)?;
    let provenance = |alpha, stream| Provenance {
        device_seed: Some(spec.seed),
        generation_seed: Some(stream),
        alpha,
    };
    let mut train = generate_dataset(
        &device,
        spec.train_count,
        spec.train_alpha,
        &mut Rng::with_stream(spec.seed, TRAIN_STREAM),
    )?;
    train.set_provenance(provenance(spec.train_alpha, TRAIN_STREAM));
    let mut test = generate_dataset(
        &device,
        spec.test_count,
        spec.test_alpha,
        &mut Rng::with_stream(spec.seed, TEST_STREAM),
    )?;
    test.set_provenance(provenance(spec.test_alpha, TEST_STREAM));

    let mut init_rng = Rng::with_stream(spec.seed, INIT_STREAM);
    let init = match spec.init {
        InitStrategy::BlackBox => init_black_box(spec.n_modes, spec.n_mixers, &mut init_rng)?,
        InitStrategy::APriori { alpha } => init_a_priori(&device, alpha, &mut init_rng)?,
    };
    let config = LearnConfig {
        seed: spec.seed,
        ..spec.learn.clone()
    };
    let (model, trace) = learn_model(&train, &test, &init, &config)?;
    let report = cross_validate(&model, &test, config.cv_threshold)?;
    Ok(ExperimentOutcome {
        device,
        train,
        test,
        init,
        model,
        trace,
        report,
    })
}

/// Settings shared by the learning sweeps.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    /// Independent experiments per grid point.
    pub reps: usize,
    pub epochs: usize,
    pub test_count: usize,
    /// Whether test unitaries carry the same noise as the training set. On by
    /// default: held-out pairs come from the same measurement process.
    pub noisy_test: bool,
    pub learn: LearnConfig,
    pub seed: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            reps: 10,
            epochs: 1000,
            test_count: 100,
            noisy_test: true,
            learn: LearnConfig::default(),
            seed: 0,
        }
    }
}

impl SweepSettings {
    /// Seed of repetition `rep`; shared across grid points so that every
    /// grid point sees the same devices.
    pub fn rep_seed(&self, rep: usize) -> u64 {
        self.seed.wrapping_add(rep as u64)
    }

    fn spec(&self, n_modes: usize, count: usize, alpha: f64, init: InitStrategy, rep: usize) -> ExperimentSpec {
        ExperimentSpec {
            n_modes,
            n_mixers: n_modes,
            train_count: count,
            test_count: self.test_count,
            train_alpha: alpha,
            test_alpha: if self.noisy_test { alpha } else { 0.0 },
            init,
            learn: LearnConfig {
                epochs: self.epochs,
                ..self.learn.clone()
            },
            seed: self.rep_seed(rep),
        }
    }
}

/// Aggregate over the repetitions of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSummary {
    pub mean_j: f64,
    pub pass_fraction: f64,
    pub reps: usize,
}

fn check_grid<T>(name: &str, grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(MeshError::InvalidInput(format!("empty grid: {name}")));
    }
    Ok(())
}

/// Runs every (grid point, repetition) experiment, in parallel, and
/// summarises per grid point in grid order.
fn run_grid(specs: Vec<Vec<ExperimentSpec>>) -> Result<Vec<GridSummary>> {
    let flat: Vec<(usize, ExperimentSpec)> = specs
        .into_iter()
        .enumerate()
        .flat_map(|(g, reps)| reps.into_iter().map(move |s| (g, s)))
        .collect();
    let points = flat.iter().map(|(g, _)| *g + 1).max().unwrap_or(0);
    let results: Vec<(usize, f64, bool)> = flat
        .par_iter()
        .map(|(g, spec)| {
            let out = run_experiment(spec)?;
            Ok((*g, out.report.mean, out.report.pass))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..points)
        .map(|g| {
            let here: Vec<_> = results.iter().filter(|r| r.0 == g).collect();
            let reps = here.len();
            GridSummary {
                mean_j: here.iter().map(|r| r.1).sum::<f64>() / reps as f64,
                pass_fraction: here.iter().filter(|r| r.2).count() as f64 / reps as f64,
                reps,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSizeRow {
    pub n_modes: usize,
    pub count: usize,
    pub summary: GridSummary,
}

/// Black-box learning over a grid of mode counts and training-set sizes.
pub fn train_size_sweep(
    modes: &[usize],
    counts: &[usize],
    alpha: f64,
    settings: &SweepSettings,
) -> Result<Vec<TrainSizeRow>> {
    check_grid("modes", modes)?;
    check_grid("counts", counts)?;
    let grid: Vec<(usize, usize)> = modes
        .iter()
        .flat_map(|&n| counts.iter().map(move |&m| (n, m)))
        .collect();
    let specs = grid
        .iter()
        .map(|&(n, m)| {
            (0..settings.reps)
                .map(|r| settings.spec(n, m, alpha, InitStrategy::BlackBox, r))
                .collect()
        })
        .collect();
    let summaries = run_grid(specs)?;
    Ok(grid
        .into_iter()
        .zip(summaries)
        .map(|((n_modes, count), summary)| TrainSizeRow {
            n_modes,
            count,
            summary,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRow {
    pub alpha: f64,
    pub summary: GridSummary,
}

/// Black-box learning from noisy training sets over a grid of noise levels.
pub fn noise_sweep(
    n_modes: usize,
    count: usize,
    alphas: &[f64],
    settings: &SweepSettings,
) -> Result<Vec<NoiseRow>> {
    check_grid("alphas", alphas)?;
    let specs = alphas
        .iter()
        .map(|&a| {
            (0..settings.reps)
                .map(|r| settings.spec(n_modes, count, a, InitStrategy::BlackBox, r))
                .collect()
        })
        .collect();
    let summaries = run_grid(specs)?;
    Ok(alphas
        .iter()
        .zip(summaries)
        .map(|(&alpha, summary)| NoiseRow { alpha, summary })
        .collect())
}

/// Lowest grid noise level at which at most half of the repetitions pass, or
/// `None` if every level passes.
pub fn noise_crossover(rows: &[NoiseRow]) -> Option<f64> {
    rows.iter()
        .filter(|r| r.summary.pass_fraction <= 0.5)
        .map(|r| r.alpha)
        .fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |b| b.min(a))))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AprioriRow {
    pub n_modes: usize,
    pub init_alpha: f64,
    pub summary: GridSummary,
}

/// Learning from a perturbed copy of the true device, over mode counts and
/// initial-guess noise levels. Training data are noiseless.
pub fn apriori_sweep(
    modes: &[usize],
    init_alphas: &[f64],
    count: usize,
    settings: &SweepSettings,
) -> Result<Vec<AprioriRow>> {
    check_grid("modes", modes)?;
    check_grid("alphas", init_alphas)?;
    let grid: Vec<(usize, f64)> = modes
        .iter()
        .flat_map(|&n| init_alphas.iter().map(move |&a| (n, a)))
        .collect();
    let specs = grid
        .iter()
        .map(|&(n, a)| {
            (0..settings.reps)
                .map(|r| settings.spec(n, count, 0.0, InitStrategy::APriori { alpha: a }, r))
                .collect()
        })
        .collect();
    let summaries = run_grid(specs)?;
    Ok(grid
        .into_iter()
        .zip(summaries)
        .map(|((n_modes, init_alpha), summary)| AprioriRow {
            n_modes,
            init_alpha,
            summary,
        })
        .collect())
}

/// Largest initial-guess noise level that still trains (majority pass), per
/// mode count, in first-appearance order.
pub fn apriori_boundary(rows: &[AprioriRow]) -> Vec<(usize, Option<f64>)> {
    let mut modes: Vec<usize> = Vec::new();
    for r in rows {
        if !modes.contains(&r.n_modes) {
            modes.push(r.n_modes);
        }
    }
    modes
        .into_iter()
        .map(|n| {
            let best = rows
                .iter()
                .filter(|r| r.n_modes == n && r.summary.pass_fraction > 0.5)
                .map(|r| r.init_alpha)
                .fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |b| b.max(a))));
            (n, best)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationRow {
    pub alpha: f64,
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    pub mean_j: f64,
    pub samples: usize,
}

/// Mean fidelity and `J` between Haar unitaries and their noisy copies.
///
/// Every noise level replays the same random stream, so all levels see the
/// same unitaries and the same noise directions.
pub fn fidelity_calibration(
    n_modes: usize,
    alphas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<CalibrationRow>> {
    check_grid("alphas", alphas)?;
    if samples == 0 {
        return Err(MeshError::InvalidInput("samples must be >= 1".into()));
    }
    alphas
        .par_iter()
        .map(|&alpha| {
            let mut rng = Rng::new(seed);
            let mut fids = Vec::with_capacity(samples);
            let mut js = 0.0;
            for _ in 0..samples {
                let u = haar_random_unitary(n_modes, &mut rng)?;
                let p = perturb_unitary(&u, alpha, &mut rng)?;
                fids.push(fidelity(&u, &p)?);
                js += frobenius_distance(&u, &p)?;
            }
            let mean = fids.iter().sum::<f64>() / samples as f64;
            let var = fids.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / samples as f64;
            Ok(CalibrationRow {
                alpha,
                mean_fidelity: mean,
                std_fidelity: var.sqrt(),
                mean_j: js / samples as f64,
                samples,
            })
        })
        .collect()
}

fn render_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv write");
    for r in rows {
        w.write_record(&r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

pub fn train_size_csv(rows: &[TrainSizeRow]) -> String {
    render_csv(
        &["n_modes", "count", "mean_j", "pass_fraction", "reps"],
        rows.iter().map(|r| {
            vec![
                r.n_modes.to_string(),
                r.count.to_string(),
                fmt_f64(r.summary.mean_j),
                fmt_f64(r.summary.pass_fraction),
                r.summary.reps.to_string(),
            ]
        }),
    )
}

pub fn noise_csv(rows: &[NoiseRow]) -> String {
    render_csv(
        &["alpha", "mean_j", "pass_fraction", "reps"],
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.alpha),
                fmt_f64(r.summary.mean_j),
                fmt_f64(r.summary.pass_fraction),
                r.summary.reps.to_string(),
            ]
        }),
    )
}

pub fn apriori_csv(rows: &[AprioriRow]) -> String {
    render_csv(
        &["n_modes", "init_alpha", "mean_j", "pass_fraction", "reps"],
        rows.iter().map(|r| {
            vec![
                r.n_modes.to_string(),
                fmt_f64(r.init_alpha),
                fmt_f64(r.summary.mean_j),
                fmt_f64(r.summary.pass_fraction),
                r.summary.reps.to_string(),
            ]
        }),
    )
}

pub fn calibration_csv(rows: &[CalibrationRow]) -> String {
    render_csv(
        &["alpha", "mean_fidelity", "std_fidelity", "mean_j", "samples"],
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.alpha),
                fmt_f64(r.mean_fidelity),
                fmt_f64(r.std_fidelity),
                fmt_f64(r.mean_j),
                r.samples.to_string(),
            ]
        }),
    )
}
