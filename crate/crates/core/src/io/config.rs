//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cells::CellModel;
use crate::error::{Error, Result};
use crate::optim::DescentConfig;
use crate::scenario::{
    comm_scenario, sensing_scenario, AlphaMode, CommKind, Geometry, Isolation, SensingGrid,
    SensingKind, ANGLE_RANGE_WL, RANGE_MAX_M,
};
use crate::solvers::CouplingModel;

/// What the SIM is optimized for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Comm {
        layout: CommKind,
        #[serde(default = "free_alpha")]
        alpha: AlphaMode,
    },
    Sensing {
        layout: SensingKind,
        /// Range grid extent, or the radius of the angle grid.
        #[serde(default)]
        r_max: Option<f64>,
        #[serde(default = "default_points")]
        n_points: usize,
        #[serde(default = "default_per_gap")]
        test_per_gap: usize,
    },
}

fn free_alpha() -> AlphaMode {
    AlphaMode::Free
}

fn default_points() -> usize {
    8
}

fn default_per_gap() -> usize {
    3
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig::Comm {
            layout: CommKind::MuSimo,
            alpha: AlphaMode::Free,
        }
    }
}

impl TaskConfig {
    pub fn is_comm(&self) -> bool {
        matches!(self, TaskConfig::Comm { .. })
    }

    /// The sensing grid; `None` for communication tasks.
    pub fn grid(&self, wavelength: f64) -> Option<SensingGrid> {
        match *self {
            TaskConfig::Comm { .. } => None,
            TaskConfig::Sensing {
                layout,
                r_max,
                n_points,
                ..
            } => Some(match layout {
                SensingKind::Range => SensingGrid::range(r_max.unwrap_or(RANGE_MAX_M), n_points),
                SensingKind::Angle => {
                    SensingGrid::angle(r_max.unwrap_or(ANGLE_RANGE_WL * wavelength), n_points)
                }
            }),
        }
    }

    fn default_geometry(&self) -> Geometry {
        match *self {
            TaskConfig::Comm { layout, .. } => comm_scenario(layout).0,
            TaskConfig::Sensing { layout, .. } => sensing_scenario(layout).0,
        }
    }

    fn resolved(&self, wavelength: f64) -> Self {
        match self.clone() {
            TaskConfig::Sensing {
                layout,
                r_max,
                n_points,
                test_per_gap,
            } => TaskConfig::Sensing {
                layout,
                r_max: Some(r_max.unwrap_or(match layout {
                    SensingKind::Range => RANGE_MAX_M,
                    SensingKind::Angle => ANGLE_RANGE_WL * wavelength,
                })),
                n_points,
                test_per_gap,
            },
            t => t,
        }
    }
}

/// Geometry fields that may replace the task defaults. Source positions are
/// always derived from the task.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryOverrides {
    pub frequency_hz: Option<f64>,
    pub wavelength: Option<f64>,
    pub layer_spacing: Option<f64>,
    pub element_spacing_y: Option<f64>,
    pub element_spacing_z: Option<f64>,
    pub array_gap: Option<f64>,
    pub layers: Option<usize>,
    pub array_shape: Option<(usize, usize)>,
    pub probe_distance: Option<f64>,
    pub probe_shape: Option<(usize, usize)>,
    pub kappa: Option<f64>,
    pub coupling_jitter: Option<f64>,
}

impl GeometryOverrides {
    fn apply(&self, g: &mut Geometry) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { g.$f = v; })*};
        }
        set!(
            frequency_hz,
            wavelength,
            layer_spacing,
            element_spacing_y,
            element_spacing_z,
            array_gap,
            layers,
            array_shape,
            probe_distance,
            probe_shape,
            kappa,
            coupling_jitter
        );
    }

    fn from_geometry(g: &Geometry) -> Self {
        Self {
            frequency_hz: Some(g.frequency_hz),
            wavelength: Some(g.wavelength),
            layer_spacing: Some(g.layer_spacing),
            element_spacing_y: Some(g.element_spacing_y),
            element_spacing_z: Some(g.element_spacing_z),
            array_gap: Some(g.array_gap),
            layers: Some(g.layers),
            array_shape: Some(g.array_shape),
            probe_distance: Some(g.probe_distance),
            probe_shape: Some(g.probe_shape),
            kappa: Some(g.kappa),
            coupling_jitter: Some(g.coupling_jitter),
        }
    }
}

/// A measured or exported network used instead of the synthetic one.
/// Port order in the file is transmitters, SIM ports, probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TouchstoneSource {
    pub path: PathBuf,
    /// Defaults to the geometry carrier.
    #[serde(default)]
    pub frequency_hz: Option<f64>,
    pub sources: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub task: TaskConfig,
    pub geometry: GeometryOverrides,
    pub isolation: Isolation,
    pub touchstone: Option<TouchstoneSource>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            task: TaskConfig::default(),
            geometry: GeometryOverrides::default(),
            isolation: Isolation::InfiniteGround,
            touchstone: None,
        }
    }
}

impl ScenarioConfig {
    /// Task default geometry with the overrides applied and sources placed.
    pub fn geometry(&self) -> Geometry {
        let mut g = self.task.default_geometry();
        self.geometry.apply(&mut g);
        g.tx_layout = match &self.task {
            TaskConfig::Comm { layout, .. } => crate::scenario::comm_sources(&g, *layout),
            TaskConfig::Sensing { .. } => self
                .task
                .grid(g.wavelength)
                .map(|grid| grid.positions())
                .unwrap_or_default(),
        };
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    pub model: CellModel,
    /// Quantization levels `|P|`; continuous only when absent.
    pub levels: Option<usize>,
    /// JSON codebook; replaces the uniform quantization of `model`.
    pub codebook_path: Option<PathBuf>,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            model: CellModel::IdealPhase,
            levels: None,
            codebook_path: None,
        }
    }
}

impl CellConfig {
    pub fn is_discrete(&self) -> bool {
        self.levels.is_some() || self.codebook_path.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub descent: DescentConfig,
    pub max_sweeps: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            descent: DescentConfig::default(),
            max_sweeps: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// SNR points in dB; task dependent when absent.
    pub snr_db: Option<Vec<f64>>,
    /// Noise realizations per SNR point for sensing.
    pub draws: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            snr_db: None,
            draws: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub out_dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("results"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of the synthetic network.
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub model: CouplingModel,
    pub cells: CellConfig,
    pub optimizer: OptimizerConfig,
    pub metrics: MetricsConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            scenario: ScenarioConfig::default(),
            model: CouplingModel::I,
            cells: CellConfig::default(),
            optimizer: OptimizerConfig::default(),
            metrics: MetricsConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// `start:step:stop` with both ends included.
pub fn parse_snr_sweep(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::Config(format!("SNR sweep must be start:step:stop, got {text:?}"));
    let [a, s, b] = parts.as_slice() else {
        return Err(bad());
    };
    let (start, step, stop): (f64, f64, f64) = (
        a.trim().parse().map_err(|_| bad())?,
        s.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let message = e.to_string();
            match e.classify() {
                serde_json::error::Category::Syntax | serde_json::error::Category::Eof => {
                    Error::Parse {
                        path: path.to_path_buf(),
                        line: e.line(),
                        message,
                    }
                }
                _ => Error::Config(format!("{}: {message}", path.display())),
            }
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Replaces both the network seed and the descent seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.optimizer.descent.rng_seed = seed;
    }

    pub fn default_snr_db(&self) -> Vec<f64> {
        let (step, stop) = if self.scenario.task.is_comm() {
            (5.0, 30.0)
        } else {
            (10.0, 40.0)
        };
        (0..=(stop / step) as usize)
            .map(|i| i as f64 * step)
            .collect()
    }

    pub fn snr_db(&self) -> Vec<f64> {
        self.metrics
            .snr_db
            .clone()
            .unwrap_or_else(|| self.default_snr_db())
    }

    /// Every optional field filled with the value that will be used.
    pub fn resolved(&self) -> Self {
        let mut r = self.clone();
        let g = self.scenario.geometry();
        r.scenario.geometry = GeometryOverrides::from_geometry(&g);
        r.scenario.task = self.scenario.task.resolved(g.wavelength);
        if let Some(ts) = &mut r.scenario.touchstone {
            ts.frequency_hz.get_or_insert(g.frequency_hz);
        }
        r.metrics.snr_db = Some(self.snr_db());
        r
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.scenario.geometry();
        g.validate()?;
        self.scenario.isolation.validate()?;
        self.cells.model.validate()?;
        self.optimizer.descent.validate()?;
        if let Some(levels) = self.cells.levels {
            if levels == 0 {
                return Err(Error::Config("levels must be at least 1".into()));
            }
        }
        match &self.scenario.task {
            TaskConfig::Comm { alpha, .. } => {
                if let AlphaMode::Fixed(a) = alpha {
                    if !(a.is_finite() && *a > 0.0) {
                        return Err(Error::Config(format!("alpha must be positive, got {a}")));
                    }
                }
            }
            TaskConfig::Sensing {
                r_max, n_points, ..
            } => {
                if *n_points < 2 {
                    return Err(Error::Config(
                        "sensing needs at least two grid points".into(),
                    ));
                }
                if r_max.is_some_and(|r| !(r.is_finite() && r > 0.0)) {
                    return Err(Error::Config("r_max must be positive".into()));
                }
                if self.scenario.touchstone.is_some() {
                    return Err(Error::Unsupported(
                        "sensing tasks need the synthetic network".into(),
                    ));
                }
                if self.metrics.draws == 0 {
                    return Err(Error::Config("draws must be positive".into()));
                }
            }
        }
        if self.snr_db().iter().any(|s| !s.is_finite()) || self.snr_db().is_empty() {
            return Err(Error::Config("SNR sweep must hold finite values".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let c = ExperimentConfig::from_json("{}", Path::new("c.json")).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"sed": 3}"#, Path::new("c.json")).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        let err = ExperimentConfig::from_json(
            r#"{"optimizer": {"descent": {"step": 1}}}"#,
            Path::new("c.json"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        let err = ExperimentConfig::from_json("{\n\"seed\": ", Path::new("c.json")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn resolved_config_is_a_fixed_point() {
        let c = ExperimentConfig::from_json(
            r#"{"scenario": {"task": {"kind": "sensing", "layout": "angle"}, "geometry": {"layers": 3}},
                "cells": {"model": {"kind": "lossy_parametric", "insertion_loss_db": 18, "return_loss_db": 6}, "levels": 8}}"#,
            Path::new("c.json"),
        )
        .unwrap();
        let r = c.resolved();
        assert_eq!(r.scenario.geometry.layers, Some(3));
        assert_eq!(
            r.metrics.snr_db.as_deref(),
            Some(&[0.0, 10.0, 20.0, 30.0, 40.0][..])
        );
        let TaskConfig::Sensing { r_max, .. } = r.scenario.task else {
            panic!()
        };
        assert!((r_max.unwrap() - 10.7).abs() < 1e-12);
        let text = serde_json::to_string(&r).unwrap();
        let back = ExperimentConfig::from_json(&text, Path::new("r.json")).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.resolved(), r);
        assert_eq!(back.scenario.geometry(), c.scenario.geometry());
    }

    #[test]
    fn snr_sweep_syntax() {
        assert_eq!(
            parse_snr_sweep("0:5:30").unwrap(),
            vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
        );
        assert_eq!(
            parse_snr_sweep("-10:2.5:-5").unwrap(),
            vec![-10.0, -7.5, -5.0]
        );
        for bad in ["0:0:10", "10:1:0", "0:5", "a:b:c"] {
            assert!(parse_snr_sweep(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut c = ExperimentConfig::default();
        c.cells.levels = Some(0);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::default();
        c.optimizer.descent.armijo_c = 2.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
