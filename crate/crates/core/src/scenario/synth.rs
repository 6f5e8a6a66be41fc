//! Synthetic scattering matrices from a free-space coupling kernel.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, CMatrix, ZERO};
use crate::netcore::{PartitionedScattering, SimTopology};
use crate::random::rng;
use crate::scenario::geometry::{distance, Geometry, Point};
use crate::solvers::{in_isolated_pattern, SimSystem};

/// Spectral-norm ceiling of the assembled global matrix.
pub const PASSIVITY_MARGIN: f64 = 0.95;

/// Ground-plane model between the arrays.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Isolation {
    /// Links outside the layered pattern are removed.
    InfiniteGround,
    /// Links outside the layered pattern are attenuated by `leak_db`.
    FiniteGround { leak_db: f64 },
}

impl Isolation {
    /// Amplitude factor applied to forbidden links.
    pub fn leak_amplitude(&self) -> f64 {
        match self {
            Isolation::InfiniteGround => 0.0,
            Isolation::FiniteGround { leak_db } => 10f64.powf(-leak_db / 20.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Isolation::FiniteGround { leak_db } = self {
            if !leak_db.is_finite() || *leak_db < 0.0 {
                return Err(Error::Config(format!(
                    "leak_db must be a non-negative number, got {leak_db}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PortClass {
    Source,
    Sim(usize),
    Probe,
}

/// `κ (λ / 4πd) e^{−j2πd/λ} cos γ`, with `γ` the elevation of the link out
/// of the `xy` plane (`z`-directed dipoles).
pub fn coupling_kernel(geometry: &Geometry, a: &Point, b: &Point) -> Result<Complex64> {
    let d = distance(a, b);
    if d <= 0.0 || !d.is_finite() {
        return Err(Error::Geometry(format!("coincident ports at {a:?}")));
    }
    let lambda = geometry.wavelength;
    let horizontal = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let amp = geometry.kappa * lambda / (4.0 * PI * d) * (horizontal / d);
    Ok(Complex64::from_polar(amp, -2.0 * PI * d / lambda))
}

fn link_factor(
    a: PortClass,
    b: PortClass,
    topology: &SimTopology,
    leak: f64,
    i: usize,
    j: usize,
) -> f64 {
    let last = topology.arrays() - 1;
    let allowed = match (a, b) {
        (PortClass::Source, PortClass::Source) | (PortClass::Probe, PortClass::Probe) => true,
        (PortClass::Source, PortClass::Probe) | (PortClass::Probe, PortClass::Source) => false,
        (PortClass::Source, PortClass::Sim(x)) | (PortClass::Sim(x), PortClass::Source) => x == 0,
        (PortClass::Probe, PortClass::Sim(x)) | (PortClass::Sim(x), PortClass::Probe) => x == last,
        (PortClass::Sim(_), PortClass::Sim(_)) => in_isolated_pattern(topology, i, j),
    };
    if allowed {
        1.0
    } else {
        leak
    }
}

/// A synthesized network together with what is needed to add new sources.
#[derive(Clone, Debug)]
pub struct SynthScenario {
    pub geometry: Geometry,
    pub topology: SimTopology,
    pub isolation: Isolation,
    pub scattering: PartitionedScattering,
    /// Factor applied to every kernel value to meet the passivity margin.
    pub scale: f64,
    sim_ports: Vec<Point>,
    probes: Vec<Point>,
}

pub fn synth_scattering(
    geometry: &Geometry,
    topology: &SimTopology,
    isolation: Isolation,
    seed: u64,
) -> Result<SynthScenario> {
    geometry.validate()?;
    isolation.validate()?;
    if geometry.topology()? != *topology {
        return Err(Error::Config(format!(
            "geometry describes {:?}, topology is {:?}",
            geometry.topology()?,
            topology
        )));
    }
    let sources = &geometry.tx_layout;
    let sim_ports = geometry.sim_ports();
    let probes = geometry.probes();
    let (l, n, m) = (sources.len(), sim_ports.len(), probes.len());
    let k = topology.cells_per_layer();
    let mut positions = Vec::with_capacity(l + n + m);
    let mut classes = Vec::with_capacity(l + n + m);
    positions.extend_from_slice(sources);
    classes.extend(std::iter::repeat_n(PortClass::Source, l));
    positions.extend_from_slice(&sim_ports);
    classes.extend((0..n).map(|i| PortClass::Sim(i / k)));
    positions.extend_from_slice(&probes);
    classes.extend(std::iter::repeat_n(PortClass::Probe, m));

    let leak = isolation.leak_amplitude();
    let total = l + n + m;
    let mut r = rng(seed);
    let mut s = CMatrix::zeros(total, total);
    for j in 0..total {
        for i in 0..j {
            let f = link_factor(
                classes[i],
                classes[j],
                topology,
                leak,
                i.wrapping_sub(l),
                j.wrapping_sub(l),
            );
            if f == 0.0 {
                continue;
            }
            let mut v = coupling_kernel(geometry, &positions[i], &positions[j])? * f;
            if classes[i] != PortClass::Source && geometry.coupling_jitter > 0.0 {
                let (gr, gi): (f64, f64) =
                    (StandardNormal.sample(&mut r), StandardNormal.sample(&mut r));
                v *= Complex64::new(1.0, 0.0)
                    + Complex64::new(gr, gi)
                        * (geometry.coupling_jitter / std::f64::consts::SQRT_2);
            }
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    for i in 0..total {
        for j in (i + 1)..total {
            if positions[i] == positions[j] {
                return Err(Error::Geometry(format!(
                    "coincident ports at {:?}",
                    positions[i]
                )));
            }
        }
    }
    let norm = spectral_norm(&s);
    let scale = if norm > PASSIVITY_MARGIN {
        PASSIVITY_MARGIN / norm
    } else {
        1.0
    };
    s *= Complex64::new(scale, 0.0);
    let scattering = PartitionedScattering::from_global(&s, l, n, m)?;
    Ok(SynthScenario {
        geometry: geometry.clone(),
        topology: *topology,
        isolation,
        scattering,
        scale,
        sim_ports,
        probes,
    })
}

impl SynthScenario {
    pub fn system(&self) -> Result<SimSystem> {
        SimSystem::new(self.scattering.clone(), self.topology)
    }

    /// Incident field on the SIM ports (`N×S`) and direct path to the
    /// probes (`M×S`) for extra sources, with the same isolation and scale
    /// as the transmitters of the scenario.
    pub fn source_links(&self, sources: &[Point]) -> Result<(CMatrix, CMatrix)> {
        let (n, m) = (self.sim_ports.len(), self.probes.len());
        let k = self.topology.cells_per_layer();
        let leak = self.isolation.leak_amplitude();
        let mut incident = CMatrix::zeros(n, sources.len());
        let mut direct = CMatrix::zeros(m, sources.len());
        let scale = Complex64::new(self.scale, 0.0);
        for (c, src) in sources.iter().enumerate() {
            for (i, port) in self.sim_ports.iter().enumerate() {
                let f = link_factor(
                    PortClass::Source,
                    PortClass::Sim(i / k),
                    &self.topology,
                    leak,
                    0,
                    0,
                );
                if f != 0.0 {
                    incident[(i, c)] = coupling_kernel(&self.geometry, src, port)? * f * scale;
                }
            }
            for (i, probe) in self.probes.iter().enumerate() {
                let f = link_factor(
                    PortClass::Source,
                    PortClass::Probe,
                    &self.topology,
                    leak,
                    0,
                    0,
                );
                direct[(i, c)] = if f == 0.0 {
                    ZERO
                } else {
                    coupling_kernel(&self.geometry, src, probe)? * f * scale
                };
            }
        }
        Ok((incident, direct))
    }

    pub fn probes(&self) -> &[Point] {
        &self.probes
    }
}
