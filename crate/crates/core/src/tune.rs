//! Programming stage: phase settings that make a learned model realise a
//! target unitary.

use std::f64::consts::TAU;

use crate::error::{MeshError, Result};
use crate::matcore::{frobenius_distance, ComplexMatrix, Rng};
use crate::mesh::{forward, phase_factors, phase_objective, MeshModel, PhaseSchedule};
use crate::optim::{minimize, ObjectiveEval, OptimizerConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct TuneConfig {
    pub restarts: usize,
    pub optimizer: OptimizerConfig,
    pub success_threshold: f64,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            optimizer: OptimizerConfig {
                max_iterations: 2000,
                gradient_tolerance: 1e-10,
                ..OptimizerConfig::default()
            },
            success_threshold: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    /// Best phases, wrapped to `[0, 2π)`.
    pub phases: PhaseSchedule,
    /// `J(forward(model, phases), target)` for the returned phases.
    pub achieved_j: f64,
    /// Final `J` of every restart, in restart order.
    pub per_restart: Vec<f64>,
    pub success: bool,
}

/// Minimises `J(forward(model, Φ), target)` over all phases from
/// `restarts` uniformly random starting points.
///
/// Restart `r` draws its start from stream `r` of `seed`, so a run with more
/// restarts repeats the earlier ones exactly. Ties go to the lowest restart
/// index.
pub fn program_phases(
    model: &MeshModel,
    target: &ComplexMatrix,
    config: &TuneConfig,
) -> Result<TuneResult> {
    let n = model.n_modes();
    if target.rows() != n || target.cols() != n {
        return Err(MeshError::shape(
            format!("{n}x{n} target"),
            target.shape_str(),
        ));
    }
    if config.restarts == 0 {
        return Err(MeshError::InvalidInput("restarts must be >= 1".into()));
    }
    config.optimizer.validate()?;

    let layers = model.n_phase_layers();
    let basis = model.raw_basis();
    let objective = |p: &[f64]| {
        let (value, gradient) = phase_objective(&basis, &phase_factors(p), target);
        ObjectiveEval { value, gradient }
    };

    let mut best: Option<(f64, PhaseSchedule)> = None;
    let mut per_restart = Vec::with_capacity(config.restarts);
    for restart in 0..config.restarts {
        let mut rng = Rng::with_stream(config.seed, restart as u64);
        let start: Vec<f64> = (0..layers * n).map(|_| rng.uniform_range(0.0, TAU)).collect();
        let (raw, _) = minimize(objective, &start, &config.optimizer)?;
        let phases = PhaseSchedule::new(layers, n, raw)?;
        let j = frobenius_distance(forward(model, &phases)?.as_matrix(), target)?;
        per_restart.push(j);
        if best.as_ref().is_none_or(|(b, _)| j < *b) {
            best = Some((j, phases));
        }
    }
    let (achieved_j, phases) = best.expect("at least one restart");
    Ok(TuneResult {
        phases,
        achieved_j,
        per_restart,
        success: achieved_j <= config.success_threshold,
    })
}
