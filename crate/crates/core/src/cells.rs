//! Tunable two-port cell models and the block-diagonal termination `Γ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{det2, inv2, wrap_phase, Block2, CMatrix, ONE, ZERO};
use crate::netcore::SimTopology;
use num_complex::Complex64;

/// Blocks with `|det|` below this are treated as singular.
pub const SINGULAR_CELL_DET: f64 = 1e-14;

/// Continuous (phase-controlled) cell behaviour.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellModel {
    /// `[[0, e^{jη}], [e^{jη}, 0]]`.
    IdealPhase,
    /// Transmission magnitude `10^(−IL/20)` with phase `η`, real reflection
    /// `10^(−RL/20)` on both ports.
    LossyParametric {
        insertion_loss_db: f64,
        return_loss_db: f64,
    },
}

impl CellModel {
    pub fn lossy(insertion_loss_db: f64, return_loss_db: f64) -> Result<Self> {
        let model = CellModel::LossyParametric {
            insertion_loss_db,
            return_loss_db,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if let CellModel::LossyParametric {
            insertion_loss_db,
            return_loss_db,
        } = *self
        {
            if !(insertion_loss_db >= 0.0 && return_loss_db >= 0.0) {
                return Err(Error::Config(format!(
                    "losses must be non-negative dB values, got IL = {insertion_loss_db}, RL = {return_loss_db}"
                )));
            }
            let (t, r) = self.magnitudes();
            // singular values are |r ± t e^{jη}|, the largest reaching r + t
            if t + r > 1.0 + 1e-12 {
                return Err(Error::Config(format!(
                    "lossy cell is not passive: |S21| + |S11| = {:.4} > 1",
                    t + r
                )));
            }
        }
        Ok(())
    }

    /// `(|Γ₂₁|, |Γ₁₁|)`.
    pub fn magnitudes(&self) -> (f64, f64) {
        match *self {
            CellModel::IdealPhase => (1.0, 0.0),
            CellModel::LossyParametric {
                insertion_loss_db,
                return_loss_db,
            } => (
                db_to_amplitude(insertion_loss_db),
                db_to_amplitude(return_loss_db),
            ),
        }
    }

    pub fn block(&self, eta: f64) -> Block2 {
        let (t, r) = self.magnitudes();
        let trans = Complex64::from_polar(t, eta);
        let refl = Complex64::new(r, 0.0);
        Block2::new(refl, trans, trans, refl)
    }

    /// `∂Γ_cell/∂η`.
    pub fn tangent_block(&self, eta: f64) -> Block2 {
        let (t, _) = self.magnitudes();
        let d = Complex64::new(0.0, 1.0) * Complex64::from_polar(t, eta);
        Block2::new(ZERO, d, d, ZERO)
    }
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(-db / 20.0)
}

/// Finite set of admissible 2×2 cell states, shared by all cells or given per cell.
#[derive(Clone, Debug, PartialEq)]
pub enum CellCodebook {
    Shared(Vec<Block2>),
    PerCell(Vec<Vec<Block2>>),
}

impl CellCodebook {
    pub fn shared(states: Vec<Block2>) -> Result<Self> {
        let book = CellCodebook::Shared(states);
        book.validate()?;
        Ok(book)
    }

    pub fn per_cell(states: Vec<Vec<Block2>>) -> Result<Self> {
        let book = CellCodebook::PerCell(states);
        book.validate()?;
        Ok(book)
    }

    /// Phase-only states at `2π(ℓ−1)/P`, `ℓ = 1..P`.
    pub fn uniform_phase(levels: usize) -> Result<Self> {
        Self::quantized(&CellModel::IdealPhase, levels)
    }

    /// The continuous model sampled at `P` uniform phases.
    pub fn quantized(model: &CellModel, levels: usize) -> Result<Self> {
        model.validate()?;
        let states = (0..levels)
            .map(|l| model.block(2.0 * PI * l as f64 / levels as f64))
            .collect();
        Self::shared(states)
    }

    pub fn validate(&self) -> Result<()> {
        let lists: Vec<&Vec<Block2>> = match self {
            CellCodebook::Shared(s) => vec![s],
            CellCodebook::PerCell(v) => v.iter().collect(),
        };
        if lists.is_empty() {
            return Err(Error::Config("per-cell codebook lists no cells".into()));
        }
        for states in lists {
            if states.is_empty() {
                return Err(Error::Config("codebook has no states".into()));
            }
            for (l, st) in states.iter().enumerate() {
                let norm = spectral_norm2(st);
                if norm > 1.0 + 1e-9 {
                    return Err(Error::Config(format!(
                        "codebook state {} is not passive (spectral norm {norm:.6})",
                        l + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn states(&self, p: usize) -> &[Block2] {
        match self {
            CellCodebook::Shared(s) => s,
            CellCodebook::PerCell(v) => &v[p],
        }
    }

    /// Largest state count over all cells.
    pub fn max_levels(&self) -> usize {
        match self {
            CellCodebook::Shared(s) => s.len(),
            CellCodebook::PerCell(v) => v.iter().map(Vec::len).max().unwrap_or(0),
        }
    }

    pub fn check_cells(&self, cells: usize) -> Result<()> {
        if let CellCodebook::PerCell(v) = self {
            if v.len() != cells {
                return Err(Error::dim("per-cell codebook", cells, v.len()));
            }
        }
        Ok(())
    }
}

/// Spectral norm of a 2×2 complex matrix.
pub fn spectral_norm2(m: &Block2) -> f64 {
    let g = m.adjoint() * m;
    let (a, c, b) = (g[(0, 0)].re, g[(1, 1)].re, g[(0, 1)].norm());
    let half = (a - c) / 2.0;
    ((a + c) / 2.0 + (half * half + b * b).sqrt()).sqrt()
}

/// Cell configuration: phases for continuous models, zero-based state
/// indices for codebooks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningState {
    Continuous(Vec<f64>),
    Discrete(Vec<usize>),
}

impl TuningState {
    /// Phases wrapped to `(−π, π]`.
    pub fn continuous(phases: Vec<f64>) -> Self {
        TuningState::Continuous(phases.into_iter().map(wrap_phase).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            TuningState::Continuous(v) => v.len(),
            TuningState::Discrete(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phases(&self) -> Option<&[f64]> {
        match self {
            TuningState::Continuous(v) => Some(v),
            TuningState::Discrete(_) => None,
        }
    }

    pub fn levels(&self) -> Option<&[usize]> {
        match self {
            TuningState::Discrete(v) => Some(v),
            TuningState::Continuous(_) => None,
        }
    }
}

/// Where cell blocks come from.
#[derive(Clone, Copy, Debug)]
pub enum CellSource<'a> {
    Continuous(&'a CellModel),
    Discrete(&'a CellCodebook),
}

/// Block-diagonal termination: one 2×2 block per cell placed at its port pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Termination {
    topology: SimTopology,
    blocks: Vec<Block2>,
}

impl Termination {
    pub fn from_blocks(topology: SimTopology, blocks: Vec<Block2>) -> Result<Self> {
        if blocks.len() != topology.total_cells() {
            return Err(Error::dim(
                "termination blocks",
                topology.total_cells(),
                blocks.len(),
            ));
        }
        Ok(Self { topology, blocks })
    }

    /// Reads the cell blocks out of a dense `N×N` matrix, rejecting entries
    /// outside the cell pattern.
    pub fn from_dense(topology: SimTopology, gamma: &CMatrix) -> Result<Self> {
        let n = topology.total_ports();
        if gamma.nrows() != n || gamma.ncols() != n {
            return Err(Error::dim(
                "termination",
                format!("{n}x{n}"),
                format!("{}x{}", gamma.nrows(), gamma.ncols()),
            ));
        }
        let mut partner = vec![0usize; n];
        let blocks = (0..topology.total_cells())
            .map(|p| {
                let (m, k) = topology.ports(p);
                partner[m] = k;
                partner[k] = m;
                Block2::new(gamma[(m, m)], gamma[(m, k)], gamma[(k, m)], gamma[(k, k)])
            })
            .collect();
        for j in 0..n {
            for i in 0..n {
                if i != j && i != partner[j] && gamma[(i, j)] != ZERO {
                    return Err(Error::Config(format!(
                        "termination entry ({i}, {j}) lies outside the cell pattern"
                    )));
                }
            }
        }
        Ok(Self { topology, blocks })
    }

    pub fn topology(&self) -> &SimTopology {
        &self.topology
    }

    pub fn blocks(&self) -> &[Block2] {
        &self.blocks
    }

    pub fn block(&self, p: usize) -> &Block2 {
        &self.blocks[p]
    }

    pub fn set_block(&mut self, p: usize, block: Block2) {
        self.blocks[p] = block;
    }

    pub fn to_dense(&self) -> CMatrix {
        let n = self.topology.total_ports();
        let mut g = CMatrix::zeros(n, n);
        for (p, b) in self.blocks.iter().enumerate() {
            let (m, k) = self.topology.ports(p);
            g[(m, m)] = b[(0, 0)];
            g[(m, k)] = b[(0, 1)];
            g[(k, m)] = b[(1, 0)];
            g[(k, k)] = b[(1, 1)];
        }
        g
    }

    /// Blockwise inverse, same sparsity pattern.
    pub fn inverse(&self) -> Result<Self> {
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(p, b)| {
                let det = det2(b).norm();
                if det <= SINGULAR_CELL_DET {
                    return Err(Error::SingularCell { cell: p, det });
                }
                Ok(inv2(b).expect("nonzero determinant"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            topology: self.topology,
            blocks,
        })
    }

    /// `Γ X` in `O(N · cols)`.
    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(x.nrows(), x.ncols());
        for (p, b) in self.blocks.iter().enumerate() {
            let (m, k) = self.topology.ports(p);
            for c in 0..x.ncols() {
                let (xm, xk) = (x[(m, c)], x[(k, c)]);
                out[(m, c)] = b[(0, 0)] * xm + b[(0, 1)] * xk;
                out[(k, c)] = b[(1, 0)] * xm + b[(1, 1)] * xk;
            }
        }
        out
    }

    /// `Γ^H X`.
    pub fn apply_adjoint(&self, x: &CMatrix) -> CMatrix {
        let adj = Self {
            topology: self.topology,
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        };
        adj.apply(x)
    }
}

/// Builds `Γ` from a cell model or codebook and a matching state vector.
pub fn assemble_gamma(
    topology: &SimTopology,
    source: CellSource<'_>,
    state: &TuningState,
) -> Result<Termination> {
    let cells = topology.total_cells();
    if state.len() != cells {
        return Err(Error::dim("tuning state", cells, state.len()));
    }
    let blocks = match (source, state) {
        (CellSource::Continuous(model), TuningState::Continuous(eta)) => {
            model.validate()?;
            eta.iter().map(|&e| model.block(e)).collect()
        }
        (CellSource::Discrete(book), TuningState::Discrete(levels)) => {
            book.check_cells(cells)?;
            levels
                .iter()
                .enumerate()
                .map(|(p, &l)| {
                    book.states(p).get(l).copied().ok_or(Error::IndexRange {
                        what: "codebook state",
                        index: l,
                        bound: book.states(p).len(),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        _ => {
            return Err(Error::Config(
                "tuning state kind does not match the cell model kind".into(),
            ))
        }
    };
    Termination::from_blocks(*topology, blocks)
}

/// Dense blockwise inverse of a block-diagonal termination matrix.
pub fn invert_gamma_blockwise(topology: &SimTopology, gamma: &CMatrix) -> Result<CMatrix> {
    Ok(Termination::from_dense(*topology, gamma)?
        .inverse()?
        .to_dense())
}

/// `∂Γ/∂η_p`: a single 2×2 block at the ports of cell `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellTangent {
    pub cell: usize,
    pub ports: (usize, usize),
    pub block: Block2,
}

impl CellTangent {
    pub fn to_dense(&self, n: usize) -> CMatrix {
        let mut t = CMatrix::zeros(n, n);
        let (m, k) = self.ports;
        t[(m, m)] = self.block[(0, 0)];
        t[(m, k)] = self.block[(0, 1)];
        t[(k, m)] = self.block[(1, 0)];
        t[(k, k)] = self.block[(1, 1)];
        t
    }
}

pub fn cell_tangent(
    topology: &SimTopology,
    source: CellSource<'_>,
    state: &TuningState,
    p: usize,
) -> Result<CellTangent> {
    let model = match source {
        CellSource::Continuous(m) => m,
        CellSource::Discrete(_) => return Err(Error::UnsupportedDerivative("discrete codebooks")),
    };
    let eta = state
        .phases()
        .ok_or(Error::UnsupportedDerivative("discrete tuning states"))?;
    if eta.len() != topology.total_cells() {
        return Err(Error::dim(
            "tuning state",
            topology.total_cells(),
            eta.len(),
        ));
    }
    let (_, _) = topology.cell_location(p)?;
    Ok(CellTangent {
        cell: p,
        ports: topology.ports(p),
        block: model.tangent_block(eta[p]),
    })
}

/// Nearest codebook state per cell in Frobenius distance; lowest index wins ties.
pub fn project_to_codebook(blocks: &[Block2], codebook: &CellCodebook) -> Result<TuningState> {
    codebook.validate()?;
    codebook.check_cells(blocks.len())?;
    let levels = blocks
        .iter()
        .enumerate()
        .map(|(p, target)| {
            let mut best = (0usize, f64::INFINITY);
            for (l, st) in codebook.states(p).iter().enumerate() {
                let d = (st - target).norm_squared();
                if d < best.1 {
                    best = (l, d);
                }
            }
            best.0
        })
        .collect();
    Ok(TuningState::Discrete(levels))
}

/// Continuous phases of ideal cells as 2×2 blocks.
pub fn ideal_blocks(eta: &[f64]) -> Vec<Block2> {
    eta.iter()
        .map(|&e| CellModel::IdealPhase.block(e))
        .collect()
}

/// 2×2 identity-pattern cell (port-wise short through).
pub fn identity_block() -> Block2 {
    Block2::new(ONE, ZERO, ZERO, ONE)
}
