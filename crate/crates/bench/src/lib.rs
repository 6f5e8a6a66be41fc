//! Shared fixtures for the benchmarks.

use simnet_core::scenario::{synth_scattering, Geometry, Isolation, SynthScenario};
use simnet_core::{CellModel, DescentConfig};

/// A single-row SIM of `layers` layers with `cells` cells each and leaky ground planes.
pub fn scenario(layers: usize, cells: usize) -> SynthScenario {
    let mut g = Geometry {
        layers,
        array_shape: (cells, 1),
        ..Default::default()
    };
    g.tx_layout = g.planar_array(g.front_x() - 10.0 * g.wavelength, (4, 1));
    let t = g.topology().expect("valid layout");
    synth_scattering(&g, &t, Isolation::FiniteGround { leak_db: 30.0 }, 1)
        .expect("synthesis succeeds")
}

pub fn phases(cells: usize) -> Vec<f64> {
    DescentConfig::default().initial_phases(cells)
}

pub fn cell_model() -> CellModel {
    CellModel::IdealPhase
}
