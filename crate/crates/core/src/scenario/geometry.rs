//! Physical layout of the transmitters, the SIM layers and the probes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::SimTopology;

pub const CARRIER_HZ: f64 = 28e9;
/// Free-space wavelength at the 28 GHz carrier, rounded to 10.7 mm.
pub const WAVELENGTH_M: f64 = 10.7e-3;

pub type Point = [f64; 3];

/// Placement of every port in the scene. Lengths in metres, `x` is the
/// propagation axis; layer 0 is centred on the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub frequency_hz: f64,
    pub wavelength: f64,
    /// `d_x^{t-ris}`: distance between consecutive layer planes.
    pub layer_spacing: f64,
    pub element_spacing_y: f64,
    pub element_spacing_z: f64,
    /// Distance between the receive and the transmit array of one layer.
    pub array_gap: f64,
    pub layers: usize,
    /// `(N_y, N_z)` elements per array.
    pub array_shape: (usize, usize),
    /// `d_x^{prb}`: probe plane behind the last transmit array.
    pub probe_distance: f64,
    pub probe_shape: (usize, usize),
    pub tx_layout: Vec<Point>,
    /// Defaults to a probe array built from `probe_shape` when empty.
    pub rx_layout: Vec<Point>,
    /// Kernel gain `κ`.
    pub kappa: f64,
    /// Relative spread of the coupling between non-source ports, drawn per seed.
    pub coupling_jitter: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        let lambda = WAVELENGTH_M;
        Self {
            frequency_hz: CARRIER_HZ,
            wavelength: lambda,
            layer_spacing: 1.5 * lambda,
            element_spacing_y: 0.5 * lambda,
            element_spacing_z: 0.75 * lambda,
            array_gap: 0.5 * lambda,
            layers: 5,
            array_shape: (16, 4),
            probe_distance: 4.0 * lambda,
            probe_shape: (4, 1),
            tx_layout: Vec::new(),
            rx_layout: Vec::new(),
            kappa: 1.0,
            coupling_jitter: 0.02,
        }
    }
}

impl Geometry {
    pub fn topology(&self) -> Result<SimTopology> {
        SimTopology::new(self.layers, self.array_shape.0 * self.array_shape.1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength", self.wavelength),
            ("frequency_hz", self.frequency_hz),
            ("layer_spacing", self.layer_spacing),
            ("element_spacing_y", self.element_spacing_y),
            ("element_spacing_z", self.element_spacing_z),
            ("array_gap", self.array_gap),
            ("probe_distance", self.probe_distance),
            ("kappa", self.kappa),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Geometry(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.coupling_jitter >= 0.0 && self.coupling_jitter.is_finite()) {
            return Err(Error::Geometry(format!(
                "coupling_jitter must be >= 0, got {}",
                self.coupling_jitter
            )));
        }
        if self.array_gap >= self.layer_spacing {
            return Err(Error::Geometry(
                "array_gap must be smaller than layer_spacing".into(),
            ));
        }
        if self.tx_layout.is_empty() {
            return Err(Error::Geometry("no transmitters".into()));
        }
        if self.rx_layout.is_empty() && self.probe_shape.0 * self.probe_shape.1 == 0 {
            return Err(Error::Geometry("no receive probes".into()));
        }
        for p in self.tx_layout.iter().chain(&self.rx_layout) {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Geometry(format!("non-finite position {p:?}")));
            }
        }
        self.topology()?;
        Ok(())
    }

    /// Centre plane of layer `q`.
    pub fn layer_x(&self, q: usize) -> f64 {
        q as f64 * self.layer_spacing
    }

    /// Planar array of `shape` centred on `(x, 0, 0)`, `y`-major ordering.
    pub fn planar_array(&self, x: f64, shape: (usize, usize)) -> Vec<Point> {
        let (ny, nz) = shape;
        let y0 = (ny as f64 - 1.0) / 2.0;
        let z0 = (nz as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(ny * nz);
        for iy in 0..ny {
            for iz in 0..nz {
                out.push([
                    x,
                    (iy as f64 - y0) * self.element_spacing_y,
                    (iz as f64 - z0) * self.element_spacing_z,
                ]);
            }
        }
        out
    }

    /// Positions of the `N = 2QK` SIM ports in port order.
    pub fn sim_ports(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for q in 0..self.layers {
            let x = self.layer_x(q);
            out.extend(self.planar_array(x - self.array_gap / 2.0, self.array_shape));
            out.extend(self.planar_array(x + self.array_gap / 2.0, self.array_shape));
        }
        out
    }

    /// `x` of the last transmit array.
    pub fn last_array_x(&self) -> f64 {
        self.layer_x(self.layers.saturating_sub(1)) + self.array_gap / 2.0
    }

    pub fn probes(&self) -> Vec<Point> {
        if self.rx_layout.is_empty() {
            self.planar_array(self.last_array_x() + self.probe_distance, self.probe_shape)
        } else {
            self.rx_layout.clone()
        }
    }

    /// `x` of the first receive array.
    pub fn front_x(&self) -> f64 {
        -self.array_gap / 2.0
    }

    /// Largest transverse extent of one array along `y`.
    pub fn aperture(&self) -> f64 {
        self.array_shape.0 as f64 * self.element_spacing_y
    }

    /// `2D²/λ`.
    pub fn fraunhofer_distance(&self) -> f64 {
        2.0 * self.aperture().powi(2) / self.wavelength
    }
}

/// Point at range `r` and azimuth `phi` in front of the SIM (negative `x`).
pub fn polar_source(r: f64, phi: f64) -> Point {
    [-r * phi.cos(), r * phi.sin(), 0.0]
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ports_follow_layer_order() {
        let g = Geometry {
            layers: 2,
            array_shape: (2, 1),
            tx_layout: vec![[-1.0, 0.0, 0.0]],
            ..Default::default()
        };
        let p = g.sim_ports();
        assert_eq!(p.len(), 8);
        let lambda = g.wavelength;
        assert!((p[0][0] + 0.25 * lambda).abs() < 1e-15);
        assert!((p[2][0] - 0.25 * lambda).abs() < 1e-15);
        assert!((p[4][0] - 1.25 * lambda).abs() < 1e-15);
        assert!((p[1][1] - p[0][1] - 0.5 * lambda).abs() < 1e-15);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn probes_sit_behind_last_layer() {
        let g = Geometry::default();
        let probes = g.probes();
        assert_eq!(probes.len(), 4);
        let x = 4.0 * 1.5 * WAVELENGTH_M + 0.25 * WAVELENGTH_M + 4.0 * WAVELENGTH_M;
        assert!(probes.iter().all(|p| (p[0] - x).abs() < 1e-12));
    }

    #[test]
    fn invalid_geometry_rejected() {
        let g = Geometry {
            tx_layout: vec![[f64::NAN, 0.0, 0.0]],
            ..Default::default()
        };
        assert!(matches!(g.validate(), Err(Error::Geometry(_))));
        let g = Geometry::default();
        assert!(g.validate().is_err());
    }
}
