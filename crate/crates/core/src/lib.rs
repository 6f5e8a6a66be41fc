//! Scattering-network models and optimizers for stacked intelligent metasurfaces.
//!
//! A stacked metasurface (SIM) is `Q` transmissive layers, each with `K`
//! tunable two-port cells bridging a receive and a transmit array. The whole
//! structure, together with a transmitting and a receiving array, is a
//! linear multiport network described by a scattering matrix. The crate
//! evaluates that network for any cell configuration, differentiates it with
//! the adjoint method and tunes the cells either continuously or over a
//! finite codebook.

pub mod cells;
pub mod error;
pub mod io;
pub mod linalg;
pub mod netcore;
pub mod optim;
pub mod pipeline;
pub mod random;
pub mod scenario;
pub mod solvers;

pub use cells::{
    assemble_gamma, cell_tangent, invert_gamma_blockwise, project_to_codebook, CellCodebook,
    CellModel, CellSource, CellTangent, Termination, TuningState,
};
pub use error::{Error, Result};
pub use io::{ExperimentConfig, StateManifest, TouchstoneFile, TouchstoneFormat};
pub use linalg::{Block2, CMatrix};
pub use netcore::{
    end_to_end_channel, solve_forward, PartitionedScattering, SimTopology, WaveBatch,
};
pub use optim::{BetaMode, DescentConfig, LossSpec, Objective};
pub use pipeline::{run_experiment, Experiment, Metrics, RunSummary};
pub use solvers::{BlockTridiagonal, CouplingModel, SimSystem, ThomasFactorization};
