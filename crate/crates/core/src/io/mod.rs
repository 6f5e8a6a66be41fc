//! File formats: Touchstone, JSON codebooks and state manifests, result writers.

pub mod config;
pub mod states;
pub mod touchstone;
pub mod write;

pub use config::{
    parse_snr_sweep, CellConfig, ExperimentConfig, GeometryOverrides, MetricsConfig,
    OptimizerConfig, OutputConfig, ScenarioConfig, TaskConfig, TouchstoneSource,
};
pub use states::{
    export_gamma_states, read_codebook, write_codebook, CodebookJson, ManifestEntry, StateManifest,
};
pub use touchstone::{
    parse_touchstone, write_touchstone, FrequencyUnit, TouchstoneFile, TouchstoneFormat,
};
pub use write::{write_atomic, write_csv, write_json};
