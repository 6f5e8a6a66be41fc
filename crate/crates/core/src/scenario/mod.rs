//! Synthetic scenes standing in for full-wave data, targets and metrics.

pub mod comm;
pub mod geometry;
pub mod sensing;
pub mod synth;

pub use comm::{
    capacity, capacity_with_noise, comm_scenario, comm_sources, offdiag_suppression_db,
    stream_noise_power, AlphaMode, CommKind, CommTarget,
};
pub use geometry::{Geometry, Point, CARRIER_HZ, WAVELENGTH_M};
pub use sensing::{
    error_std, estimate_parameter, monte_carlo_error_std, probe_outputs, sensing_scenario,
    NoiseModel, SensingGrid, SensingKind, ANGLE_RANGE_WL, RANGE_MAX_M,
};
pub use synth::{coupling_kernel, synth_scattering, Isolation, SynthScenario};
