//! Multi-stream communication scenarios and their metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, ONE};
use crate::netcore::SimTopology;
use crate::optim::{BetaMode, LossSpec};
use crate::scenario::geometry::{polar_source, Geometry, WAVELENGTH_M};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommKind {
    /// Four single-antenna users on a far-field arc.
    MuSimo,
    /// A 4×1 transmit array facing the SIM at short range.
    Mimo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// The gain of `αI` is absorbed by the optimal rescale of `β`.
    Free,
    /// Fixed target `αI` with `β = 1`.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommTarget {
    pub kind: CommKind,
    pub streams: usize,
    pub alpha_mode: AlphaMode,
}

impl CommTarget {
    pub fn loss_spec(&self) -> LossSpec {
        match self.alpha_mode {
            AlphaMode::Free => LossSpec::identity(self.streams, BetaMode::OptimalRescale),
            AlphaMode::Fixed(alpha) => LossSpec::new(
                CMatrix::identity(self.streams, self.streams) * (ONE * alpha),
                BetaMode::Fixed(ONE),
            ),
        }
    }
}

/// User ring radius `R_t` for the multi-user case, in wavelengths.
pub const MU_SIMO_RADIUS_WL: f64 = 220.0;
/// Angular separation of the users, in degrees.
pub const MU_SIMO_SEPARATION_DEG: f64 = 12.0;
/// Transmit array distance `d_x^{tx}` for the MIMO case, in wavelengths.
pub const MIMO_DISTANCE_WL: f64 = 10.0;

/// Default communication layout: `Q = 5`, 16×4 cells per array, four probes.
pub fn comm_scenario(kind: CommKind) -> (Geometry, SimTopology, CommTarget) {
    let lambda = WAVELENGTH_M;
    let mut g = Geometry {
        layers: 5,
        array_shape: (16, 4),
        probe_shape: (4, 1),
        probe_distance: 4.0 * lambda,
        ..Default::default()
    };
    g.tx_layout = comm_sources(&g, kind);
    let topology = g.topology().expect("default layout is valid");
    let target = CommTarget {
        kind,
        streams: 4,
        alpha_mode: AlphaMode::Free,
    };
    (g, topology, target)
}

/// Transmitter positions of `kind` for the given geometry.
pub fn comm_sources(g: &Geometry, kind: CommKind) -> Vec<[f64; 3]> {
    let lambda = g.wavelength;
    match kind {
        CommKind::MuSimo => {
            let r = MU_SIMO_RADIUS_WL * lambda;
            let step = MU_SIMO_SEPARATION_DEG.to_radians();
            (0..4)
                .map(|i| polar_source(r, (i as f64 - 1.5) * step))
                .collect()
        }
        CommKind::Mimo => g.planar_array(g.front_x() - MIMO_DISTANCE_WL * lambda, (4, 1)),
    }
}

/// Per-stream noise power `σ²` such that mean diagonal power over `σ²` is `snr_db`.
pub fn stream_noise_power(y: &CMatrix, snr_db: f64) -> f64 {
    let l = y.nrows();
    let mean_diag = (0..l).map(|i| y[(i, i)].norm_sqr()).sum::<f64>() / l as f64;
    mean_diag / 10f64.powf(snr_db / 10.0)
}

/// `Σ_ℓ log₂(1 + SINR_ℓ)` with interference from the off-diagonal entries of row `ℓ`.
pub fn capacity(y: &CMatrix, snr_db: f64) -> Result<f64> {
    capacity_with_noise(y, stream_noise_power(y, snr_db))
}

pub fn capacity_with_noise(y: &CMatrix, noise: f64) -> Result<f64> {
    if !y.is_square() {
        return Err(Error::dim(
            "stream channel",
            "square",
            format!("{}x{}", y.nrows(), y.ncols()),
        ));
    }
    let mut c = 0.0;
    for l in 0..y.nrows() {
        let signal = y[(l, l)].norm_sqr();
        let interference: f64 = (0..y.ncols())
            .filter(|&k| k != l)
            .map(|k| y[(l, k)].norm_sqr())
            .sum();
        let denom = noise + interference;
        let sinr = if denom == 0.0 {
            if signal == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            signal / denom
        };
        c += (1.0 + sinr).log2();
    }
    Ok(c)
}

/// Diagonal power over off-diagonal power, in dB.
pub fn offdiag_suppression_db(y: &CMatrix) -> f64 {
    let mut diag = 0.0;
    let mut off = 0.0;
    for j in 0..y.ncols() {
        for i in 0..y.nrows() {
            if i == j {
                diag += y[(i, j)].norm_sqr();
            } else {
                off += y[(i, j)].norm_sqr();
            }
        }
    }
    10.0 * (diag / off).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn default_layouts() {
        let (g, t, target) = comm_scenario(CommKind::MuSimo);
        assert_eq!(t.total_cells(), 320);
        assert_eq!(t.total_ports(), 640);
        assert_eq!(target.streams, 4);
        assert_eq!(g.tx_layout.len(), 4);
        for p in &g.tx_layout {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 220.0 * WAVELENGTH_M).abs() < 1e-12);
        }
        let a0 = g.tx_layout[0][1].atan2(-g.tx_layout[0][0]);
        let a1 = g.tx_layout[1][1].atan2(-g.tx_layout[1][0]);
        assert!(((a1 - a0).to_degrees() - 12.0).abs() < 1e-9);

        let (g, _, _) = comm_scenario(CommKind::Mimo);
        assert!((g.front_x() - g.tx_layout[0][0] - 0.107).abs() < 1e-12);
    }

    #[test]
    fn diagonal_channel_at_zero_db() {
        let y = CMatrix::identity(4, 4) * Complex64::new(0.0, 2.0);
        assert!((capacity(&y, 0.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(capacity(&y, -200.0).unwrap() < 1e-15);
    }

    #[test]
    fn leakage_matches_hand_computation() {
        let y = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.3),
                Complex64::new(0.2, 0.0),
                Complex64::new(0.0, 0.5),
            ],
        );
        // mean diagonal power 0.625, σ² = 0.0625 at 10 dB
        let s1: f64 = 1.0 / (0.0625 + 0.09);
        let s2: f64 = 0.25 / (0.0625 + 0.04);
        let expected = (1.0 + s1).log2() + (1.0 + s2).log2();
        assert!((capacity(&y, 10.0).unwrap() - expected).abs() < 1e-12);
        assert!((offdiag_suppression_db(&y) - 10.0 * (1.25f64 / 0.13).log10()).abs() < 1e-12);
        assert!(capacity(&CMatrix::zeros(2, 3), 0.0).is_err());
    }
}
