//! Near-field range and angle sensing: grids, estimation and error statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::cells::Termination;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::netcore::SimTopology;
use crate::scenario::geometry::{polar_source, Geometry, Point, WAVELENGTH_M};
use crate::scenario::synth::SynthScenario;
use crate::solvers::{CouplingModel, SimSystem};

/// Correlations this close to one are treated as an exact signature match.
pub const EXACT_MATCH_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingKind {
    Range,
    Angle,
}

/// Training locations; `points` are `(range, angle)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingGrid {
    pub kind: SensingKind,
    pub points: Vec<(f64, f64)>,
    pub r_max: f64,
    pub n_points: usize,
}

/// Default range-grid extent `R_max`.
pub const RANGE_MAX_M: f64 = 1.0;
/// Distance of the angular grid, in wavelengths.
pub const ANGLE_RANGE_WL: f64 = 1000.0;

impl SensingGrid {
    /// `R_max / n` for `n = 1..=n_points`, on the broadside axis.
    pub fn range(r_max: f64, n_points: usize) -> Self {
        Self {
            kind: SensingKind::Range,
            points: (1..=n_points).map(|n| (r_max / n as f64, 0.0)).collect(),
            r_max,
            n_points,
        }
    }

    /// `θ_n = arcsin(n / 32)` for `n = 1..=n_points` at range `r`.
    pub fn angle(r: f64, n_points: usize) -> Self {
        Self {
            kind: SensingKind::Angle,
            points: (1..=n_points)
                .map(|n| (r, (n as f64 / 32.0).asin()))
                .collect(),
            r_max: r,
            n_points,
        }
    }

    /// The estimated parameter of each grid point.
    pub fn parameters(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|&(r, a)| self.parameter_of(r, a))
            .collect()
    }

    pub fn parameter_of(&self, range: f64, angle: f64) -> f64 {
        match self.kind {
            SensingKind::Range => range,
            SensingKind::Angle => angle,
        }
    }

    pub fn positions(&self) -> Vec<Point> {
        self.points
            .iter()
            .map(|&(r, a)| polar_source(r, a))
            .collect()
    }

    /// Location for a parameter value, the other coordinate held at the grid's.
    pub fn position_of(&self, parameter: f64) -> Point {
        match self.kind {
            SensingKind::Range => polar_source(parameter, self.points[0].1),
            SensingKind::Angle => polar_source(self.points[0].0, parameter),
        }
    }

    /// `per_gap` evenly spaced test values in every gap between sorted grid
    /// values, including the grid values themselves.
    pub fn test_parameters(&self, per_gap: usize) -> Vec<f64> {
        let mut p = self.parameters();
        p.sort_by(f64::total_cmp);
        let mut out = Vec::new();
        for w in p.windows(2) {
            for i in 0..=per_gap {
                out.push(w[0] + (w[1] - w[0]) * i as f64 / (per_gap + 1) as f64);
            }
        }
        out.extend(p.last());
        out
    }
}

/// Default sensing layout: `Q = 5` ULA layers of 64 cells, eight probes.
pub fn sensing_scenario(kind: SensingKind) -> (Geometry, SimTopology, SensingGrid) {
    let lambda = WAVELENGTH_M;
    let grid = match kind {
        SensingKind::Range => SensingGrid::range(RANGE_MAX_M, 8),
        SensingKind::Angle => SensingGrid::angle(ANGLE_RANGE_WL * lambda, 8),
    };
    let g = Geometry {
        layers: 5,
        array_shape: (64, 1),
        probe_shape: (8, 1),
        probe_distance: 4.0 * lambda,
        tx_layout: grid.positions(),
        ..Default::default()
    };
    let t = g.topology().expect("default layout is valid");
    (g, t, grid)
}

/// Probe outputs (`M×S`) for sources at `positions`.
pub fn probe_outputs(
    system: &SimSystem,
    scenario: &SynthScenario,
    model: CouplingModel,
    gamma: &Termination,
    positions: &[Point],
) -> Result<CMatrix> {
    let (incident, direct) = scenario.source_links(positions)?;
    Ok(system.respond_fields(model, gamma, &incident, direct)?.y)
}

/// Matched-filter estimate with three-point quadratic refinement.
///
/// `signatures` holds one noiseless output column per grid parameter.
pub fn estimate_parameter(
    signatures: &CMatrix,
    parameters: &[f64],
    observed: &[Complex64],
) -> Result<f64> {
    if signatures.ncols() != parameters.len() || parameters.is_empty() {
        return Err(Error::dim(
            "signature columns",
            parameters.len(),
            signatures.ncols(),
        ));
    }
    if signatures.nrows() != observed.len() {
        return Err(Error::dim(
            "observation length",
            signatures.nrows(),
            observed.len(),
        ));
    }
    let obs_norm = observed.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if obs_norm == 0.0 || !obs_norm.is_finite() {
        return Err(Error::Estimation(
            "observation is zero or not finite".into(),
        ));
    }
    let mut order: Vec<usize> = (0..parameters.len()).collect();
    order.sort_by(|&a, &b| parameters[a].total_cmp(&parameters[b]));
    let rho: Vec<f64> = order
        .iter()
        .map(|&g| {
            let col = signatures.column(g);
            let norm = col.norm();
            if norm == 0.0 {
                return 0.0;
            }
            let dot: Complex64 = col.iter().zip(observed).map(|(s, o)| s.conj() * o).sum();
            dot.norm() / (norm * obs_norm)
        })
        .collect();
    let mut best = 0;
    for (i, r) in rho.iter().enumerate() {
        if *r > rho[best] {
            best = i;
        }
    }
    let x = |i: usize| parameters[order[i]];
    if rho[best] >= 1.0 - EXACT_MATCH_TOL || best == 0 || best + 1 == rho.len() {
        return Ok(x(best));
    }
    let (x1, x2, x3) = (x(best - 1), x(best), x(best + 1));
    let (r1, r2, r3) = (rho[best - 1], rho[best], rho[best + 1]);
    let d12 = (r2 - r1) / (x2 - x1);
    let d23 = (r3 - r2) / (x3 - x2);
    let a = (d23 - d12) / (x3 - x1);
    if a >= 0.0 || !a.is_finite() {
        return Ok(x2);
    }
    let b = d12 - a * (x1 + x2);
    Ok((-b / (2.0 * a)).clamp(x1, x3))
}

/// Population standard deviation of `estimates − truths`.
pub fn error_std(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::dim("estimates", truths.len(), estimates.len()));
    }
    if estimates.len() < 2 {
        return Err(Error::Estimation(
            "at least two test points are needed".into(),
        ));
    }
    let n = estimates.len() as f64;
    let errors: Vec<f64> = estimates.iter().zip(truths).map(|(e, t)| e - t).collect();
    let mean = errors.iter().sum::<f64>() / n;
    Ok((errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Additive circular Gaussian noise with power set relative to a reference output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseModel {
    pub snr_db: f64,
    pub sigma_n_sq: f64,
}

impl NoiseModel {
    /// `σ²` such that the mean per-port power of `reference` over `σ²` equals `snr_db`.
    pub fn from_reference(reference: &[Complex64], snr_db: f64) -> Self {
        let power =
            reference.iter().map(|v| v.norm_sqr()).sum::<f64>() / reference.len().max(1) as f64;
        Self {
            snr_db,
            sigma_n_sq: power / 10f64.powf(snr_db / 10.0),
        }
    }

    /// Uses the test output with the least power (the farthest test point).
    pub fn from_weakest(outputs: &CMatrix, snr_db: f64) -> Self {
        let weakest = outputs
            .column_iter()
            .min_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
            .map(|c| c.iter().copied().collect::<Vec<_>>())
            .unwrap_or_default();
        Self::from_reference(&weakest, snr_db)
    }

    pub fn add_noise<R: rand::Rng + ?Sized>(
        &self,
        clean: &[Complex64],
        rng: &mut R,
    ) -> Vec<Complex64> {
        let sd = (self.sigma_n_sq / 2.0).sqrt();
        clean
            .iter()
            .map(|v| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                v + Complex64::new(re * sd, im * sd)
            })
            .collect()
    }
}

/// Error standard deviation over `draws` noise realizations of every test output.
///
/// Draw `d` uses stream `d` of a generator seeded with `seed`, so results do
/// not depend on the thread count.
pub fn monte_carlo_error_std(
    signatures: &CMatrix,
    parameters: &[f64],
    test_outputs: &CMatrix,
    truths: &[f64],
    noise: &NoiseModel,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    if test_outputs.ncols() != truths.len() {
        return Err(Error::dim(
            "test outputs",
            truths.len(),
            test_outputs.ncols(),
        ));
    }
    let columns: Vec<Vec<Complex64>> = test_outputs
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    let per_draw: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            columns
                .iter()
                .map(|c| estimate_parameter(signatures, parameters, &noise.add_noise(c, &mut rng)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let estimates: Vec<f64> = per_draw.into_iter().flatten().collect();
    let all_truths: Vec<f64> = (0..draws).flat_map(|_| truths.iter().copied()).collect();
    error_std(&estimates, &all_truths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_matrix;

    #[test]
    fn grid_rules() {
        let g = SensingGrid::range(1.0, 8);
        assert!((g.points[3].0 - 0.25).abs() < 1e-15);
        let a = SensingGrid::angle(10.7, 8);
        assert!((a.points[7].1.to_degrees() - 14.4775).abs() < 1e-3);
        let (geo, t, _) = sensing_scenario(SensingKind::Range);
        assert_eq!(t.cells_per_layer(), 64);
        assert!((geo.aperture() - 0.3424).abs() < 1e-4);
        assert!((geo.fraunhofer_distance() - 21.9).abs() < 0.05);
    }

    #[test]
    fn test_parameters_cover_grid() {
        let g = SensingGrid::range(1.0, 4);
        let p = g.test_parameters(2);
        assert_eq!(p.len(), 3 * 3 + 1);
        for v in g.parameters() {
            assert!(p.contains(&v));
        }
    }

    fn col(m: &CMatrix, j: usize) -> Vec<Complex64> {
        m.column(j).iter().copied().collect()
    }

    #[test]
    fn exact_and_scaled_signatures() {
        let sig = random_matrix(6, 5, 1);
        let params = [0.5, 0.1, 0.3, 0.2, 0.9];
        for j in 0..5 {
            assert_eq!(
                estimate_parameter(&sig, &params, &col(&sig, j)).unwrap(),
                params[j]
            );
            let scaled: Vec<_> = col(&sig, j)
                .iter()
                .map(|v| v * Complex64::new(-0.3, 2.0))
                .collect();
            assert_eq!(
                estimate_parameter(&sig, &params, &scaled).unwrap(),
                params[j]
            );
        }
        assert!(matches!(
            estimate_parameter(&sig, &params, &[Complex64::new(0.0, 0.0); 6]),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn refinement_tracks_a_smooth_peak() {
        // signatures of a steering-like family; fine-grid matched filter is the oracle
        let sig_at = |x: f64| -> Vec<Complex64> {
            (0..16)
                .map(|m| Complex64::from_polar(1.0, 3.0 * x * m as f64))
                .collect()
        };
        let grid: Vec<f64> = (0..9).map(|i| i as f64 * 0.1).collect();
        let mut sig = CMatrix::zeros(16, grid.len());
        for (j, &x) in grid.iter().enumerate() {
            for (i, v) in sig_at(x).into_iter().enumerate() {
                sig[(i, j)] = v;
            }
        }
        let truth = 0.437;
        let est = estimate_parameter(&sig, &grid, &sig_at(truth)).unwrap();
        assert!((est - truth).abs() < 0.1 * 0.25, "{est}");
        // stays within the neighbours of the coarse winner
        assert!((0.3..=0.5).contains(&est));
    }

    #[test]
    fn error_statistics() {
        assert_eq!(error_std(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((error_std(&[1.0, 3.0], &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(error_std(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let sig = random_matrix(6, 4, 2);
        let params = [0.0, 1.0, 2.0, 3.0];
        let noise = NoiseModel::from_weakest(&sig, 5.0);
        let run = || monte_carlo_error_std(&sig, &params, &sig, &params, &noise, 50, 9).unwrap();
        assert_eq!(run(), run());
        let quiet = NoiseModel {
            snr_db: f64::INFINITY,
            sigma_n_sq: 0.0,
        };
        assert_eq!(
            monte_carlo_error_std(&sig, &params, &sig, &params, &quiet, 5, 9).unwrap(),
            0.0
        );
    }
}
