//! End-to-end experiment: network, continuous descent, optional codebook
//! search, metrics and result files.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cells::{
    assemble_gamma, project_to_codebook, CellCodebook, CellModel, CellSource, Termination,
    TuningState,
};
use crate::error::{Error, Result};
use crate::io::config::{ExperimentConfig, TaskConfig};
use crate::io::states::{read_codebook, StateManifest};
use crate::io::touchstone::parse_touchstone;
use crate::io::write::{matrix_rows, write_csv, write_json};
use crate::linalg::CMatrix;
use crate::netcore::{PartitionedScattering, SimTopology};
use crate::optim::{
    coordinate_descent, descend, CoordinateOutcome, DescentOutcome, LossSpec, Objective,
};
use crate::scenario::{
    capacity, monte_carlo_error_std, offdiag_suppression_db, probe_outputs, synth_scattering,
    CommTarget, NoiseModel, SensingGrid, SynthScenario,
};
use crate::solvers::SimSystem;

/// A configured network with its target, ready to optimize.
#[derive(Debug)]
pub struct Experiment {
    /// Resolved configuration.
    pub config: ExperimentConfig,
    pub topology: SimTopology,
    pub system: SimSystem,
    /// Present unless the network came from a Touchstone file.
    pub synth: Option<SynthScenario>,
    pub spec: LossSpec,
    pub cell_model: CellModel,
    pub codebook: Option<CellCodebook>,
    pub grid: Option<SensingGrid>,
}

/// Continuous result and, with a codebook, the discrete refinement.
#[derive(Clone, Debug)]
pub struct Optimized {
    pub continuous: DescentOutcome,
    pub discrete: Option<CoordinateOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CapacityRow {
    pub snr_db: f64,
    pub capacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensingRow {
    pub snr_db: f64,
    pub sigma_n_sq: f64,
    pub error_std: f64,
}

/// Figures of merit for one configuration of the cells.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Metrics {
    Comm {
        suppression_db: f64,
        capacity: Vec<CapacityRow>,
    },
    Sensing {
        noiseless_error_std: f64,
        table: Vec<SensingRow>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct ChannelRecord {
    loss: f64,
    beta: Complex64,
    y: Vec<Vec<Complex64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseFile {
    pub eta: Vec<f64>,
}

/// Codebook indices, 1-based like the state manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelFile {
    pub levels: Vec<usize>,
}

/// What a run produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub continuous_loss: f64,
    pub discrete_loss: Option<f64>,
    pub metrics: Option<Metrics>,
}

#[derive(Serialize)]
struct ContinuousTraceCsv {
    iter: usize,
    loss: f64,
    step: f64,
    grad_norm: f64,
}

#[derive(Serialize)]
struct DiscreteTraceCsv {
    sweep: usize,
    cell: Option<usize>,
    level: Option<usize>,
    loss: f64,
}

#[derive(Serialize)]
struct CapacityCsv {
    snr_db: f64,
    capacity_continuous: f64,
    capacity_discrete: Option<f64>,
}

#[derive(Serialize)]
struct SensingCsv {
    snr_db: f64,
    sigma_n_sq_continuous: f64,
    error_std_continuous: f64,
    sigma_n_sq_discrete: Option<f64>,
    error_std_discrete: Option<f64>,
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let config = config.resolved();
        let geometry = config.scenario.geometry();
        let topology = geometry.topology()?;
        let grid = config.scenario.task.grid(geometry.wavelength);
        let (system, synth) = match &config.scenario.touchstone {
            Some(src) => {
                let file = parse_touchstone(&src.path)?;
                let f0 = src.frequency_hz.unwrap_or(geometry.frequency_hz);
                let (f, s) = file.nearest(f0).ok_or_else(|| {
                    Error::Config(format!("{} holds no frequency points", src.path.display()))
                })?;
                log::info!("using {} at {:.6} GHz", src.path.display(), f / 1e9);
                let n = topology.total_ports();
                if file.n_ports <= src.sources + n {
                    return Err(Error::dim(
                        "touchstone ports",
                        format!("> {}", src.sources + n),
                        file.n_ports,
                    ));
                }
                let scattering = PartitionedScattering::from_global(
                    s,
                    src.sources,
                    n,
                    file.n_ports - src.sources - n,
                )?;
                (SimSystem::new(scattering, topology)?, None)
            }
            None => {
                let synth =
                    synth_scattering(&geometry, &topology, config.scenario.isolation, config.seed)?;
                (synth.system()?, Some(synth))
            }
        };
        let (l, _, m) = system.scattering().dims();
        let spec = match &config.scenario.task {
            TaskConfig::Comm { layout, alpha } => CommTarget {
                kind: *layout,
                streams: l,
                alpha_mode: *alpha,
            }
            .loss_spec(),
            TaskConfig::Sensing { n_points, .. } => {
                LossSpec::identity(*n_points, Default::default())
            }
        };
        if spec.y_target.nrows() != m {
            return Err(Error::Config(format!(
                "the target needs {} probes, the network has {m}",
                spec.y_target.nrows()
            )));
        }
        let cell_model = config.cells.model;
        let codebook = match (&config.cells.codebook_path, config.cells.levels) {
            (Some(path), levels) => {
                let book = read_codebook(path)?;
                book.check_cells(topology.total_cells())?;
                if levels.is_some_and(|p| p != book.max_levels()) {
                    return Err(Error::Config(format!(
                        "levels = {} but the codebook holds {}",
                        levels.unwrap_or_default(),
                        book.max_levels()
                    )));
                }
                Some(book)
            }
            (None, Some(levels)) => Some(CellCodebook::quantized(&cell_model, levels)?),
            (None, None) => None,
        };
        Ok(Self {
            config,
            topology,
            system,
            synth,
            spec,
            cell_model,
            codebook,
            grid,
        })
    }

    pub fn objective(&self) -> Result<Objective<'_>> {
        Objective::new(&self.system, self.config.model, &self.spec)
    }

    pub fn optimize(&self) -> Result<Optimized> {
        let objective = self.objective()?;
        let cfg = &self.config.optimizer.descent;
        let eta0 = TuningState::Continuous(cfg.initial_phases(self.topology.total_cells()));
        log::info!(
            "descent: model {}, {} cells, up to {} iterations",
            self.config.model.name(),
            eta0.len(),
            cfg.max_iters
        );
        let continuous = descend(&objective, &self.cell_model, &eta0, cfg)?;
        log::info!(
            "descent stopped ({:?}) after {} iterations at loss {:.6e}",
            continuous.stop,
            continuous.trace.len() - 1,
            continuous.loss
        );
        let discrete = match &self.codebook {
            Some(book) => {
                let gamma = self.termination(&continuous.state)?;
                let init = project_to_codebook(gamma.blocks(), book)?;
                let out =
                    coordinate_descent(&objective, book, &init, self.config.optimizer.max_sweeps)?;
                log::info!(
                    "coordinate descent stopped ({:?}) after {} sweeps at loss {:.6e}",
                    out.stop,
                    out.sweeps,
                    out.loss
                );
                Some(out)
            }
            None => None,
        };
        Ok(Optimized {
            continuous,
            discrete,
        })
    }

    /// `Γ` for a continuous state through the cell model or a discrete one
    /// through the codebook.
    pub fn termination(&self, state: &TuningState) -> Result<Termination> {
        match state {
            TuningState::Continuous(_) => assemble_gamma(
                &self.topology,
                CellSource::Continuous(&self.cell_model),
                state,
            ),
            TuningState::Discrete(_) => {
                let book = self.codebook.as_ref().ok_or_else(|| {
                    Error::Config("a discrete state needs levels or a codebook".into())
                })?;
                assemble_gamma(&self.topology, CellSource::Discrete(book), state)
            }
        }
    }

    /// Manifest of a state; continuous phases are sampled through the cell model.
    pub fn manifest(&self, state: &TuningState) -> Result<StateManifest> {
        match (state, &self.codebook) {
            (TuningState::Discrete(_), Some(book)) => {
                StateManifest::from_discrete(&self.topology, book, state)
            }
            (TuningState::Discrete(_), None) => Err(Error::Config(
                "a discrete state needs levels or a codebook".into(),
            )),
            (TuningState::Continuous(_), _) => {
                StateManifest::from_sampled(&self.topology, &self.cell_model, state)
            }
        }
    }

    pub fn evaluate(&self, gamma: &Termination) -> Result<Metrics> {
        let objective = self.objective()?;
        let y = objective.output(gamma)?;
        let snrs = self.config.snr_db();
        match &self.grid {
            None => Ok(Metrics::Comm {
                suppression_db: offdiag_suppression_db(&y),
                capacity: snrs
                    .iter()
                    .map(|&snr_db| {
                        Ok(CapacityRow {
                            snr_db,
                            capacity: capacity(&y, snr_db)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            }),
            Some(grid) => {
                let synth = self.synth.as_ref().ok_or_else(|| {
                    Error::Unsupported("sensing tasks need the synthetic network".into())
                })?;
                let TaskConfig::Sensing { test_per_gap, .. } = self.config.scenario.task else {
                    unreachable!("grids only exist for sensing tasks")
                };
                let params = grid.parameters();
                let truths = grid.test_parameters(test_per_gap);
                let positions: Vec<_> = truths.iter().map(|&t| grid.position_of(t)).collect();
                let tests =
                    probe_outputs(&self.system, synth, self.config.model, gamma, &positions)?;
                let noiseless: Vec<f64> = tests
                    .column_iter()
                    .map(|c| {
                        let obs: Vec<Complex64> = c.iter().copied().collect();
                        crate::scenario::estimate_parameter(&y, &params, &obs)
                    })
                    .collect::<Result<_>>()?;
                let noiseless_error_std = crate::scenario::error_std(&noiseless, &truths)?;
                let table = snrs
                    .iter()
                    .map(|&snr_db| {
                        let noise = NoiseModel::from_weakest(&tests, snr_db);
                        let error_std = monte_carlo_error_std(
                            &y,
                            &params,
                            &tests,
                            &truths,
                            &noise,
                            self.config.metrics.draws,
                            self.config.seed,
                        )?;
                        Ok(SensingRow {
                            snr_db,
                            sigma_n_sq: noise.sigma_n_sq,
                            error_std,
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(Metrics::Sensing {
                    noiseless_error_std,
                    table,
                })
            }
        }
    }

    fn channel_record(&self, gamma: &Termination) -> Result<ChannelRecord> {
        let y = self.objective()?.output(gamma)?;
        let (loss, beta) = self.spec.evaluate(&y)?;
        Ok(ChannelRecord {
            loss,
            beta,
            y: matrix_rows(&y),
        })
    }
}

/// Files written by the optimization stage, relative to the output directory.
pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const TRACE_CONTINUOUS: &str = "trace_continuous.csv";
pub const TRACE_DISCRETE: &str = "trace_discrete.csv";
pub const ETA_FILE: &str = "eta.json";
pub const LEVELS_FILE: &str = "levels.json";
pub const MANIFEST_FILE: &str = "states_manifest.json";
pub const CHANNEL_FILE: &str = "channel.json";
pub const CAPACITY_FILE: &str = "capacity.csv";
pub const SUPPRESSION_FILE: &str = "suppression.json";
pub const SENSING_FILE: &str = "sensing.csv";

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        write_json(&path, value)?;
        self.files.push(path);
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.dir.join(name);
        write_csv(&path, rows)?;
        self.files.push(path);
        Ok(())
    }
}

fn write_optimization(exp: &Experiment, opt: &Optimized, w: &mut Writer) -> Result<()> {
    w.json(RESOLVED_CONFIG, &exp.config)?;
    let rows: Vec<_> = opt
        .continuous
        .trace
        .iter()
        .map(|r| ContinuousTraceCsv {
            iter: r.iter,
            loss: r.loss,
            step: r.step,
            grad_norm: r.grad_norm,
        })
        .collect();
    w.csv(TRACE_CONTINUOUS, &rows)?;
    w.json(
        ETA_FILE,
        &PhaseFile {
            eta: opt.continuous.phases().to_vec(),
        },
    )?;
    let continuous_gamma = exp.termination(&opt.continuous.state)?;
    let mut channel = serde_json::Map::new();
    channel.insert("model".into(), exp.config.model.name().into());
    channel.insert(
        "continuous".into(),
        serde_json::to_value(exp.channel_record(&continuous_gamma)?)?,
    );
    match &opt.discrete {
        Some(d) => {
            let rows: Vec<_> = d
                .trace
                .iter()
                .map(|r| DiscreteTraceCsv {
                    sweep: r.sweep,
                    cell: r.cell.map(|c| c + 1),
                    level: r.level.map(|l| l + 1),
                    loss: r.loss,
                })
                .collect();
            w.csv(TRACE_DISCRETE, &rows)?;
            let levels = d.state.levels().expect("coordinate descent yields levels");
            w.json(
                LEVELS_FILE,
                &LevelFile {
                    levels: levels.iter().map(|l| l + 1).collect(),
                },
            )?;
            w.json(MANIFEST_FILE, &exp.manifest(&d.state)?)?;
            let gamma = exp.termination(&d.state)?;
            channel.insert(
                "discrete".into(),
                serde_json::to_value(exp.channel_record(&gamma)?)?,
            );
        }
        None => w.json(MANIFEST_FILE, &exp.manifest(&opt.continuous.state)?)?,
    }
    w.json(CHANNEL_FILE, &channel)
}

fn write_metrics(
    exp: &Experiment,
    continuous: &Metrics,
    discrete: Option<&Metrics>,
    w: &mut Writer,
) -> Result<()> {
    match continuous {
        Metrics::Comm {
            suppression_db,
            capacity,
        } => {
            let other = match discrete {
                Some(Metrics::Comm {
                    suppression_db,
                    capacity,
                }) => Some((*suppression_db, capacity)),
                _ => None,
            };
            let rows: Vec<_> = capacity
                .iter()
                .enumerate()
                .map(|(i, r)| CapacityCsv {
                    snr_db: r.snr_db,
                    capacity_continuous: r.capacity,
                    capacity_discrete: other.map(|o| o.1[i].capacity),
                })
                .collect();
            w.csv(CAPACITY_FILE, &rows)?;
            let mut s = serde_json::Map::new();
            s.insert("model".into(), exp.config.model.name().into());
            s.insert("continuous_db".into(), (*suppression_db).into());
            if let Some((d, _)) = other {
                s.insert("discrete_db".into(), d.into());
            }
            w.json(SUPPRESSION_FILE, &s)
        }
        Metrics::Sensing { table, .. } => {
            let other = match discrete {
                Some(Metrics::Sensing { table, .. }) => Some(table),
                _ => None,
            };
            let rows: Vec<_> = table
                .iter()
                .enumerate()
                .map(|(i, r)| SensingCsv {
                    snr_db: r.snr_db,
                    sigma_n_sq_continuous: r.sigma_n_sq,
                    error_std_continuous: r.error_std,
                    sigma_n_sq_discrete: other.map(|o| o[i].sigma_n_sq),
                    error_std_discrete: other.map(|o| o[i].error_std),
                })
                .collect();
            w.csv(SENSING_FILE, &rows)
        }
    }
}

/// Optimization only: traces, final states, manifest and channels.
pub fn run_optimization(config: &ExperimentConfig) -> Result<(Experiment, Optimized, RunSummary)> {
    let exp = Experiment::build(config)?;
    let opt = exp.optimize()?;
    let mut w = Writer {
        dir: exp.config.output.out_dir.clone(),
        files: Vec::new(),
    };
    write_optimization(&exp, &opt, &mut w)?;
    let summary = RunSummary {
        out_dir: w.dir,
        files: w.files,
        continuous_loss: opt.continuous.loss,
        discrete_loss: opt.discrete.as_ref().map(|d| d.loss),
        metrics: None,
    };
    Ok((exp, opt, summary))
}

/// The full pipeline: optimization followed by the metrics of the task.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    let (exp, opt, mut summary) = run_optimization(config)?;
    let continuous = exp.evaluate(&exp.termination(&opt.continuous.state)?)?;
    let discrete = match &opt.discrete {
        Some(d) => Some(exp.evaluate(&exp.termination(&d.state)?)?),
        None => None,
    };
    let mut w = Writer {
        dir: summary.out_dir.clone(),
        files: Vec::new(),
    };
    write_metrics(&exp, &continuous, discrete.as_ref(), &mut w)?;
    summary.files.extend(w.files);
    summary.metrics = Some(discrete.unwrap_or(continuous));
    Ok(summary)
}

/// Metrics of a stored state manifest under `config`.
pub fn evaluate_manifest(
    config: &ExperimentConfig,
    manifest: &Path,
) -> Result<(Metrics, Vec<PathBuf>)> {
    let exp = Experiment::build(config)?;
    let states = StateManifest::read(manifest)?;
    if states.topology()? != exp.topology {
        return Err(Error::Config(format!(
            "manifest describes {} layers of {} cells, the configuration {} of {}",
            states.layers,
            states.cells_per_layer,
            exp.topology.layers(),
            exp.topology.cells_per_layer()
        )));
    }
    let gamma = states.termination()?;
    let metrics = exp.evaluate(&gamma)?;
    let mut w = Writer {
        dir: exp.config.output.out_dir.clone(),
        files: Vec::new(),
    };
    write_metrics(&exp, &metrics, None, &mut w)?;
    Ok((metrics, w.files))
}

/// Reads `eta.json` or `levels.json` into a tuning state.
pub fn read_state_file(path: &Path) -> Result<TuningState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |e: serde_json::Error| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
    if value.get("eta").is_some() {
        let f: PhaseFile = serde_json::from_value(value).map_err(parse_err)?;
        Ok(TuningState::Continuous(f.eta))
    } else {
        let f: LevelFile = serde_json::from_value(value).map_err(parse_err)?;
        let levels = f
            .levels
            .iter()
            .map(|&l| {
                l.checked_sub(1)
                    .ok_or_else(|| Error::Config("levels are numbered from 1".into()))
            })
            .collect::<Result<_>>()?;
        Ok(TuningState::Discrete(levels))
    }
}

/// The dense `Y` of a state, for reports.
pub fn state_channel(exp: &Experiment, state: &TuningState) -> Result<CMatrix> {
    exp.objective()?.output(&exp.termination(state)?)
}
