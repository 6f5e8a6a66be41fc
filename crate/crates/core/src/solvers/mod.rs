//! Linear solvers for the SIM core system and the per-model response engine.

pub mod coupling;
pub mod model;
pub mod thomas;

pub use coupling::{
    core_inverse_ni, core_inverse_w, in_isolated_pattern, isolated_system, split_coupling,
    CouplingDecomposition, NeumannInverse,
};
pub use model::{CouplingModel, Response, SimSystem};
pub use thomas::{thomas_factorize, thomas_solve_columns, BlockTridiagonal, ThomasFactorization};
