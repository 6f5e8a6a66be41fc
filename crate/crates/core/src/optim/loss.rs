//! Scaled Frobenius loss against a target channel.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, inner, CMatrix, ZERO};

/// How the complex gain `β` in `‖βY − Y_d‖²` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum BetaMode {
    Fixed(Complex64),
    #[default]
    OptimalRescale,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossSpec {
    pub y_target: CMatrix,
    pub beta_mode: BetaMode,
}

impl LossSpec {
    pub fn new(y_target: CMatrix, beta_mode: BetaMode) -> Self {
        Self {
            y_target,
            beta_mode,
        }
    }

    /// Identity target `I_L` with the given gain rule.
    pub fn identity(streams: usize, beta_mode: BetaMode) -> Self {
        Self::new(CMatrix::identity(streams, streams), beta_mode)
    }

    pub fn beta_for(&self, y: &CMatrix) -> Complex64 {
        match self.beta_mode {
            BetaMode::Fixed(b) => b,
            BetaMode::OptimalRescale => optimal_beta(y, &self.y_target),
        }
    }

    /// `(L, β)` for the channel `y`.
    pub fn evaluate(&self, y: &CMatrix) -> Result<(f64, Complex64)> {
        loss(y, self)
    }

    /// `E = βY − Y_d`.
    pub fn residual(&self, y: &CMatrix, beta: Complex64) -> CMatrix {
        y * beta - &self.y_target
    }
}

/// Least-squares gain `⟨Y, Y_d⟩ / ‖Y‖²`, zero when `Y = 0`.
pub fn optimal_beta(y: &CMatrix, y_target: &CMatrix) -> Complex64 {
    let power = frobenius_sq(y);
    if power == 0.0 {
        return ZERO;
    }
    inner(y, y_target) / power
}

pub fn loss(y: &CMatrix, spec: &LossSpec) -> Result<(f64, Complex64)> {
    if y.shape() != spec.y_target.shape() {
        return Err(Error::dim(
            "loss target",
            format!("{:?}", spec.y_target.shape()),
            format!("{:?}", y.shape()),
        ));
    }
    let beta = spec.beta_for(y);
    Ok((frobenius_sq(&spec.residual(y, beta)), beta))
}
