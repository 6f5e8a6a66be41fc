//! Losses, adjoint gradients and the continuous and discrete optimizers.

pub mod descent;
pub mod discrete;
pub mod gradient;
pub mod loss;

pub use descent::{descend, DescentConfig, DescentOutcome, StopReason, TraceRow};
pub use discrete::{
    candidate_losses, coordinate_descent, find_improving_move, woodbury_candidate_loss, CellWindow,
    CoordinateOutcome, SweepRow, SweepStop,
};
pub use gradient::{gradient, Evaluation, Objective};
pub use loss::{loss, optimal_beta, BetaMode, LossSpec};
