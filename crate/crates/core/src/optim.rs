//! Smooth unconstrained minimisation.
//!
//! Limited-memory BFGS (two-loop recursion) with a strong-Wolfe line search,
//! and plain steepest descent over the same line search. The solver is
//! deterministic: the same objective, start point and configuration give the
//! same iterate sequence.

use crate::error::{MeshError, Result};

/// Objective value and gradient at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Lbfgs,
    GradientDescent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    /// Stored curvature pairs. `0` turns L-BFGS into steepest descent.
    pub memory: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// First trial step, scaled by `1/‖g‖` while no curvature is stored.
    pub initial_step: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search_evals: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Lbfgs,
            memory: 10,
            max_iterations: 1000,
            gradient_tolerance: 1e-8,
            initial_step: 1.0,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_evals: 40,
        }
    }
}

impl OptimizerConfig {
    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(MeshError::InvalidInput(format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        if !(self.initial_step > 0.0) || !(self.gradient_tolerance >= 0.0) {
            return Err(MeshError::InvalidInput(
                "initial step must be > 0 and gradient tolerance >= 0".into(),
            ));
        }
        if self.max_line_search_evals == 0 {
            return Err(MeshError::InvalidInput(
                "line search needs at least one evaluation".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub value: f64,
    pub gradient_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Gradient norm at or below tolerance.
    Converged,
    MaxIterations,
    /// No step satisfying the Wolfe conditions was found.
    LineSearchFailed,
}

/// Value and gradient norm at the start point and after each iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct OptTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl OptTrace {
    /// Iterations taken (accepted steps).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_value(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.value)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], step: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + step * di).collect()
}

fn checked_eval<F>(objective: &mut F, x: &[f64]) -> Result<ObjectiveEval>
where
    F: FnMut(&[f64]) -> ObjectiveEval,
{
    let eval = objective(x);
    if eval.gradient.len() != x.len() {
        return Err(MeshError::shape(
            format!("gradient of length {}", x.len()),
            format!("{}", eval.gradient.len()),
        ));
    }
    if !eval.value.is_finite() || eval.gradient.iter().any(|g| !g.is_finite()) {
        return Err(MeshError::NonFiniteObjective {
            value: eval.value,
            iterate: x.to_vec(),
        });
    }
    Ok(eval)
}

/// Curvature pairs for the two-loop recursion, oldest first.
struct History {
    capacity: usize,
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: Vec<f64>,
}

impl History {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            s: Vec::new(),
            y: Vec::new(),
            rho: Vec::new(),
        }
    }

    fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        if self.capacity == 0 {
            return;
        }
        let sy = dot(&s, &y);
        // Pairs without positive curvature would break positive definiteness.
        if !(sy > 1e-12 * norm(&s) * norm(&y)) {
            return;
        }
        if self.s.len() == self.capacity {
            self.s.remove(0);
            self.y.remove(0);
            self.rho.remove(0);
        }
        self.s.push(s);
        self.y.push(y);
        self.rho.push(1.0 / sy);
    }

    /// `-H g` by the two-loop recursion.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            for qj in &mut q {
                *qj *= gamma;
            }
        }
        for i in 0..k {
            let beta = self.rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

struct LinePoint {
    step: f64,
    x: Vec<f64>,
    eval: ObjectiveEval,
    slope: f64,
}

enum LineSearchOutcome {
    Accepted(LinePoint),
    /// Wolfe conditions not met; carries the lowest point seen if it improved
    /// on the start.
    Failed(Option<LinePoint>),
}

/// Minimiser of the cubic through two points with values and slopes, or
/// `None` when the interpolant is degenerate.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    evals_left: usize,
    best: Option<LinePoint>,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> ObjectiveEval,
{
    fn probe(&mut self, step: f64) -> Result<LinePoint> {
        self.evals_left -= 1;
        let x = axpy(self.x, step, self.d);
        let eval = checked_eval(self.objective, &x)?;
        let slope = dot(&eval.gradient, self.d);
        let point = LinePoint {
            step,
            x,
            eval,
            slope,
        };
        let improves = point.eval.value < self.f0
            && self.best.as_ref().is_none_or(|b| point.eval.value < b.eval.value);
        if improves {
            self.best = Some(LinePoint {
                step: point.step,
                x: point.x.clone(),
                eval: point.eval.clone(),
                slope: point.slope,
            });
        }
        Ok(point)
    }

    fn armijo_ok(&self, p: &LinePoint) -> bool {
        p.eval.value <= self.f0 + self.c1 * p.step * self.slope0
    }

    fn curvature_ok(&self, p: &LinePoint) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    /// Bracketing phase followed by zoom.
    fn run(mut self, first_step: f64) -> Result<LineSearchOutcome> {
        let mut prev = LinePoint {
            step: 0.0,
            x: self.x.to_vec(),
            eval: ObjectiveEval {
                value: self.f0,
                gradient: Vec::new(),
            },
            slope: self.slope0,
        };
        let mut step = first_step;
        let mut first = true;
        while self.evals_left > 0 {
            let cur = self.probe(step)?;
            if !self.armijo_ok(&cur) || (!first && cur.eval.value >= prev.eval.value) {
                return self.zoom(prev, cur);
            }
            if self.curvature_ok(&cur) {
                return Ok(LineSearchOutcome::Accepted(cur));
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev);
            }
            first = false;
            step = cur.step * 2.0;
            prev = cur;
        }
        Ok(LineSearchOutcome::Failed(self.best))
    }

    /// Shrinks `[lo, hi]`, where `lo` satisfies sufficient decrease and has
    /// the lowest value seen so far in the bracket.
    fn zoom(mut self, mut lo: LinePoint, mut hi: LinePoint) -> Result<LineSearchOutcome> {
        while self.evals_left > 0 {
            let (left, right) = if lo.step < hi.step {
                (lo.step, hi.step)
            } else {
                (hi.step, lo.step)
            };
            let width = right - left;
            if width <= 1e-16 * right.abs().max(1.0) {
                break;
            }
            let mut trial = cubic_min(
                lo.step,
                lo.eval.value,
                lo.slope,
                hi.step,
                hi.eval.value,
                hi.slope,
            )
            .unwrap_or(0.5 * (left + right));
            // Keep the trial away from the bracket ends.
            let margin = 0.1 * width;
            if !(trial > left + margin && trial < right - margin) {
                trial = 0.5 * (left + right);
            }
            let cur = self.probe(trial)?;
            if !self.armijo_ok(&cur) || cur.eval.value >= lo.eval.value {
                hi = cur;
            } else {
                if self.curvature_ok(&cur) {
                    return Ok(LineSearchOutcome::Accepted(cur));
                }
                if cur.slope * (hi.step - lo.step) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        Ok(LineSearchOutcome::Failed(self.best))
    }
}

/// Minimises `objective` from `x0`.
///
/// Stops when the gradient norm reaches `gradient_tolerance`, after
/// `max_iterations` accepted steps, or when the line search fails; the
/// reason is recorded in the trace. Accepted steps never increase the
/// objective. A non-finite value or gradient anywhere is an error carrying
/// the offending point.
pub fn minimize<F>(
    mut objective: F,
    x0: &[f64],
    config: &OptimizerConfig,
) -> Result<(Vec<f64>, OptTrace)>
where
    F: FnMut(&[f64]) -> ObjectiveEval,
{
    config.validate()?;
    let memory = match config.algorithm {
        Algorithm::Lbfgs => config.memory,
        Algorithm::GradientDescent => 0,
    };
    let mut x = x0.to_vec();
    let mut eval = checked_eval(&mut objective, &x)?;
    let mut gnorm = norm(&eval.gradient);
    let mut records = vec![IterationRecord {
        value: eval.value,
        gradient_norm: gnorm,
    }];
    let mut history = History::new(memory);
    let mut last_step = config.initial_step / gnorm.max(f64::MIN_POSITIVE);

    let termination = loop {
        if gnorm <= config.gradient_tolerance {
            break Termination::Converged;
        }
        if records.len() > config.max_iterations {
            break Termination::MaxIterations;
        }

        let mut d = history.direction(&eval.gradient);
        let mut slope = dot(&d, &eval.gradient);
        if !(slope < 0.0) {
            history.clear();
            d = eval.gradient.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }
        let first_step = if history.is_empty() {
            if memory == 0 {
                last_step
            } else {
                config.initial_step / gnorm
            }
        } else {
            1.0
        };

        let search = LineSearch {
            objective: &mut objective,
            x: &x,
            d: &d,
            f0: eval.value,
            slope0: slope,
            c1: config.c1,
            c2: config.c2,
            evals_left: config.max_line_search_evals,
            best: None,
        };
        let (point, failed) = match search.run(first_step)? {
            LineSearchOutcome::Accepted(p) => (Some(p), false),
            LineSearchOutcome::Failed(best) => (best, true),
        };
        if let Some(p) = point {
            let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = p
                .eval
                .gradient
                .iter()
                .zip(&eval.gradient)
                .map(|(a, b)| a - b)
                .collect();
            history.push(s, y);
            last_step = p.step;
            x = p.x;
            eval = p.eval;
            gnorm = norm(&eval.gradient);
            records.push(IterationRecord {
                value: eval.value,
                gradient_norm: gnorm,
            });
        }
        if failed {
            break Termination::LineSearchFailed;
        }
    };

    Ok((
        x,
        OptTrace {
            records,
            termination,
        },
    ))
}
