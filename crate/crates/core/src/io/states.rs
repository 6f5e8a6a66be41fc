//! JSON codebooks and per-cell state manifests.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cells::{CellCodebook, CellModel, Termination, TuningState};
use crate::error::{Error, Result};
use crate::io::write::write_json;
use crate::linalg::Block2;
use crate::netcore::SimTopology;

/// A 2×2 block as row-major `[re, im]` pairs.
pub type BlockJson = [[Complex64; 2]; 2];

pub fn block_to_json(b: &Block2) -> BlockJson {
    [[b[(0, 0)], b[(0, 1)]], [b[(1, 0)], b[(1, 1)]]]
}

pub fn block_from_json(b: &BlockJson) -> Block2 {
    Block2::new(b[0][0], b[0][1], b[1][0], b[1][1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CodebookJson {
    Shared(Vec<BlockJson>),
    PerCell(Vec<Vec<BlockJson>>),
}

impl CodebookJson {
    pub fn from_codebook(book: &CellCodebook) -> Self {
        match book {
            CellCodebook::Shared(s) => CodebookJson::Shared(s.iter().map(block_to_json).collect()),
            CellCodebook::PerCell(c) => CodebookJson::PerCell(
                c.iter()
                    .map(|s| s.iter().map(block_to_json).collect())
                    .collect(),
            ),
        }
    }

    pub fn to_codebook(&self) -> Result<CellCodebook> {
        match self {
            CodebookJson::Shared(s) => {
                CellCodebook::shared(s.iter().map(block_from_json).collect())
            }
            CodebookJson::PerCell(c) => CellCodebook::per_cell(
                c.iter()
                    .map(|s| s.iter().map(block_from_json).collect())
                    .collect(),
            ),
        }
    }
}

pub fn read_codebook(path: &Path) -> Result<CellCodebook> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let json: CodebookJson = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    json.to_codebook()
}

pub fn write_codebook(book: &CellCodebook, path: &Path) -> Result<()> {
    write_json(path, &CodebookJson::from_codebook(book))
}

/// One cell in a manifest; all indices are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub p: usize,
    pub layer: usize,
    pub cell: usize,
    /// `(m, n)`: receive-side and transmit-side port.
    pub ports: [usize; 2],
    /// Codebook level `ℓ`, absent for sampled continuous states.
    pub state: Option<usize>,
    /// Phase in radians for sampled continuous states.
    pub phase: Option<f64>,
    pub s: BlockJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateManifest {
    pub layers: usize,
    pub cells_per_layer: usize,
    pub levels: Option<usize>,
    pub cells: Vec<ManifestEntry>,
}

impl StateManifest {
    /// Manifest of a discrete state; continuous states are rejected.
    pub fn from_discrete(
        topology: &SimTopology,
        codebook: &CellCodebook,
        state: &TuningState,
    ) -> Result<Self> {
        let levels = state.levels().ok_or_else(|| {
            Error::Unsupported("state export needs a discrete state or an explicit sampling".into())
        })?;
        codebook.check_cells(topology.total_cells())?;
        if levels.len() != topology.total_cells() {
            return Err(Error::dim(
                "tuning state",
                topology.total_cells(),
                levels.len(),
            ));
        }
        let cells = levels
            .iter()
            .enumerate()
            .map(|(p, &l)| {
                let block = codebook.states(p).get(l).ok_or(Error::IndexRange {
                    what: "codebook state",
                    index: l,
                    bound: codebook.states(p).len(),
                })?;
                Ok(entry(topology, p, Some(l + 1), None, block))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers: topology.layers(),
            cells_per_layer: topology.cells_per_layer(),
            levels: Some(codebook.max_levels()),
            cells,
        })
    }

    /// Manifest of continuous phases sampled through `model`.
    pub fn from_sampled(
        topology: &SimTopology,
        model: &CellModel,
        state: &TuningState,
    ) -> Result<Self> {
        let eta = state
            .phases()
            .ok_or_else(|| Error::Config("sampled export expects continuous phases".into()))?;
        if eta.len() != topology.total_cells() {
            return Err(Error::dim(
                "tuning state",
                topology.total_cells(),
                eta.len(),
            ));
        }
        let cells = eta
            .iter()
            .enumerate()
            .map(|(p, &e)| entry(topology, p, None, Some(e), &model.block(e)))
            .collect();
        Ok(Self {
            layers: topology.layers(),
            cells_per_layer: topology.cells_per_layer(),
            levels: None,
            cells,
        })
    }

    pub fn topology(&self) -> Result<SimTopology> {
        SimTopology::new(self.layers, self.cells_per_layer)
    }

    /// Rebuilds `Γ`, checking the port map of every entry.
    pub fn termination(&self) -> Result<Termination> {
        let t = self.topology()?;
        if self.cells.len() != t.total_cells() {
            return Err(Error::dim(
                "manifest cells",
                t.total_cells(),
                self.cells.len(),
            ));
        }
        let mut blocks = vec![Block2::zeros(); t.total_cells()];
        let mut seen = vec![false; t.total_cells()];
        for e in &self.cells {
            let expected = entry(
                &t,
                e.p.wrapping_sub(1).min(t.total_cells()),
                None,
                None,
                &Block2::zeros(),
            );
            if e.p == 0
                || e.p > t.total_cells()
                || (e.layer, e.cell, e.ports) != (expected.layer, expected.cell, expected.ports)
            {
                return Err(Error::Config(format!(
                    "manifest entry p={} has inconsistent indices",
                    e.p
                )));
            }
            if std::mem::replace(&mut seen[e.p - 1], true) {
                return Err(Error::Config(format!(
                    "manifest lists cell p={} twice",
                    e.p
                )));
            }
            blocks[e.p - 1] = block_from_json(&e.s);
        }
        Termination::from_blocks(t, blocks)
    }

    /// Discrete levels (0-based) when every entry carries one.
    pub fn tuning_state(&self) -> Option<TuningState> {
        let mut levels = vec![0; self.cells.len()];
        for e in &self.cells {
            *levels.get_mut(e.p.checked_sub(1)?)? = e.state?.checked_sub(1)?;
        }
        Some(TuningState::Discrete(levels))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

fn entry(
    t: &SimTopology,
    p: usize,
    state: Option<usize>,
    phase: Option<f64>,
    block: &Block2,
) -> ManifestEntry {
    let k = t.cells_per_layer();
    let (q, c) = (p / k, p % k);
    let m = 2 * k * q + c;
    ManifestEntry {
        p: p + 1,
        layer: q + 1,
        cell: c + 1,
        ports: [m + 1, m + k + 1],
        state,
        phase,
        s: block_to_json(block),
    }
}

/// Writes the manifest of a discrete state.
pub fn export_gamma_states(
    topology: &SimTopology,
    codebook: &CellCodebook,
    state: &TuningState,
    path: &Path,
) -> Result<StateManifest> {
    let manifest = StateManifest::from_discrete(topology, codebook, state)?;
    manifest.write(path)?;
    Ok(manifest)
}
