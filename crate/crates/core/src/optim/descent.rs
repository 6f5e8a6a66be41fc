//! Gradient descent over continuous phases with Armijo backtracking.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{CellModel, TuningState};
use crate::error::{Error, Result};
use crate::linalg::wrap_phase;
use crate::optim::gradient::Objective;
use crate::random::rng;

/// Smallest trial step before the line search gives up.
pub const MIN_STEP: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescentConfig {
    pub initial_step: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub rng_seed: u64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_iters: 2000,
            grad_tol: 1e-8,
            rng_seed: 7,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::Config(format!(
                "initial_step must be positive, got {}",
                self.initial_step
            )));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::Config(format!(
                "armijo_c must lie in (0, 1), got {}",
                self.armijo_c
            )));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::Config(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Config(format!(
                "grad_tol must be non-negative, got {}",
                self.grad_tol
            )));
        }
        Ok(())
    }

    /// Uniform phases on `(−π, π]` drawn from `rng_seed`.
    pub fn initial_phases(&self, cells: usize) -> Vec<f64> {
        let mut r = rng(self.rng_seed);
        (0..cells)
            .map(|_| wrap_phase(r.random_range(-PI..PI)))
            .collect()
    }
}

/// One accepted iterate. Row 0 is the starting point with `step = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub loss: f64,
    pub step: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    StepUnderflow,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct DescentOutcome {
    pub state: TuningState,
    pub loss: f64,
    pub trace: Vec<TraceRow>,
    pub stop: StopReason,
}

impl DescentOutcome {
    pub fn phases(&self) -> &[f64] {
        self.state
            .phases()
            .expect("descent produces continuous states")
    }
}

/// Steepest descent from `eta0` (continuous) until a stopping rule fires.
pub fn descend(
    objective: &Objective<'_>,
    cell_model: &CellModel,
    eta0: &TuningState,
    cfg: &DescentConfig,
) -> Result<DescentOutcome> {
    cfg.validate()?;
    let mut eta: Vec<f64> = eta0
        .phases()
        .ok_or(Error::UnsupportedDerivative("discrete tuning states"))?
        .iter()
        .map(|&e| wrap_phase(e))
        .collect();
    let mut eval = objective.evaluate(cell_model, &eta)?;
    let mut trace = Vec::new();
    let mut step = cfg.initial_step;
    let mut iter = 0;
    let stop = loop {
        let g2: f64 = eval.gradient.iter().map(|g| g * g).sum();
        let grad_norm = g2.sqrt();
        if iter == 0 {
            trace.push(TraceRow {
                iter,
                loss: eval.loss,
                step: 0.0,
                grad_norm,
            });
        } else if let Some(last) = trace.last_mut() {
            last.grad_norm = grad_norm;
        }
        if grad_norm <= cfg.grad_tol {
            break StopReason::GradientTolerance;
        }
        if iter >= cfg.max_iters {
            break StopReason::MaxIterations;
        }
        let mut t = if iter == 0 {
            cfg.initial_step
        } else {
            step / cfg.backtrack_factor
        };
        let accepted = loop {
            if t < MIN_STEP {
                break None;
            }
            let trial: Vec<f64> = eta
                .iter()
                .zip(&eval.gradient)
                .map(|(e, g)| wrap_phase(e - t * g))
                .collect();
            let trial_loss = objective.loss_at(cell_model, &trial)?;
            if trial_loss <= eval.loss - cfg.armijo_c * t * g2 {
                break Some(trial);
            }
            t *= cfg.backtrack_factor;
        };
        let Some(trial) = accepted else {
            break StopReason::StepUnderflow;
        };
        iter += 1;
        step = t;
        eval = objective.evaluate(cell_model, &trial)?;
        eta = trial;
        trace.push(TraceRow {
            iter,
            loss: eval.loss,
            step: t,
            grad_norm: f64::NAN,
        });
    };
    log::debug!(
        "descent stopped after {iter} iterations ({stop:?}), loss {:.6e}",
        eval.loss
    );
    Ok(DescentOutcome {
        state: TuningState::Continuous(eta),
        loss: eval.loss,
        trace,
        stop,
    })
}
