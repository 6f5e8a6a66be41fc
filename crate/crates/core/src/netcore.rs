//! Partitioned S-parameter networks, SIM port indexing and forward evaluation.
//!
//! Ports are split into three groups: `L` transmit ports (T), `N = 2QK`
//! SIM ports (E) and `M` receive ports (R). Transmit and receive ports are
//! matched, so only `S_ET`, `S_EE`, `S_RT` and `S_RE` enter the forward
//! solve; the other blocks are carried for passivity and reciprocity checks
//! and for Touchstone export.

use serde::{Deserialize, Serialize};

use crate::cells::Termination;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, CMatrix, DenseLu, DEFAULT_CONDITION_CAP};

/// Layer/cell layout of a stacked metasurface.
///
/// All indices are zero-based. Layer `q` occupies ports
/// `2Kq .. 2K(q+1)`; its receive array comes first, its transmit array
/// second, and cell `k` links local ports `k` and `k + K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTopology {
    layers: usize,
    cells_per_layer: usize,
}

impl SimTopology {
    pub fn new(layers: usize, cells_per_layer: usize) -> Result<Self> {
        if layers == 0 || cells_per_layer == 0 {
            return Err(Error::Config(format!(
                "topology needs Q >= 1 and K >= 1, got Q = {layers}, K = {cells_per_layer}"
            )));
        }
        Ok(Self {
            layers,
            cells_per_layer,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn cells_per_layer(&self) -> usize {
        self.cells_per_layer
    }

    /// `N = 2QK`.
    pub fn total_ports(&self) -> usize {
        2 * self.layers * self.cells_per_layer
    }

    /// `QK` tunable cells.
    pub fn total_cells(&self) -> usize {
        self.layers * self.cells_per_layer
    }

    /// Number of `K`-sized port blocks (one per array), `2Q`.
    pub fn arrays(&self) -> usize {
        2 * self.layers
    }

    /// Global ports `(m, n)` of cell `k` in layer `q`.
    pub fn cell_ports(&self, layer: usize, cell: usize) -> Result<(usize, usize)> {
        if layer >= self.layers {
            return Err(Error::IndexRange {
                what: "layer",
                index: layer,
                bound: self.layers,
            });
        }
        if cell >= self.cells_per_layer {
            return Err(Error::IndexRange {
                what: "cell",
                index: cell,
                bound: self.cells_per_layer,
            });
        }
        let k = self.cells_per_layer;
        let base = 2 * k * layer + cell;
        Ok((base, base + k))
    }

    /// Flat cell index `p = Kq + k`.
    pub fn flat_index(&self, layer: usize, cell: usize) -> Result<usize> {
        self.cell_ports(layer, cell)?;
        Ok(self.cells_per_layer * layer + cell)
    }

    /// `(q, k)` of flat cell index `p`.
    pub fn cell_location(&self, p: usize) -> Result<(usize, usize)> {
        if p >= self.total_cells() {
            return Err(Error::IndexRange {
                what: "cell index",
                index: p,
                bound: self.total_cells(),
            });
        }
        Ok((p / self.cells_per_layer, p % self.cells_per_layer))
    }

    /// Ports of flat cell index `p`. Panics when `p` is out of range.
    pub fn ports(&self, p: usize) -> (usize, usize) {
        let k = self.cells_per_layer;
        assert!(p < self.total_cells(), "cell index {p} out of range");
        let base = 2 * k * (p / k) + p % k;
        (base, base + k)
    }

    /// Array block (`0..2Q`) holding global port `port`.
    pub fn array_of_port(&self, port: usize) -> usize {
        port / self.cells_per_layer
    }
}

/// Nine-block scattering matrix of a transmitter / SIM / receiver network.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionedScattering {
    pub s_tt: CMatrix,
    pub s_te: CMatrix,
    pub s_tr: CMatrix,
    pub s_et: CMatrix,
    pub s_ee: CMatrix,
    pub s_er: CMatrix,
    pub s_rt: CMatrix,
    pub s_re: CMatrix,
    pub s_rr: CMatrix,
}

impl PartitionedScattering {
    /// Builds the network from the four blocks used by the forward solve.
    /// The remaining blocks are filled with the transposes required by
    /// reciprocity (`S_TE = S_ETᵀ`, …) and zero self-coupling at T and R.
    pub fn from_links(s_et: CMatrix, s_ee: CMatrix, s_rt: CMatrix, s_re: CMatrix) -> Result<Self> {
        let (l, m) = (s_et.ncols(), s_rt.nrows());
        let s = Self {
            s_tt: CMatrix::zeros(l, l),
            s_te: s_et.transpose(),
            s_tr: s_rt.transpose(),
            s_er: s_re.transpose(),
            s_rr: CMatrix::zeros(m, m),
            s_et,
            s_ee,
            s_rt,
            s_re,
        };
        s.validate()?;
        Ok(s)
    }

    /// Splits a global `(L+N+M)`-port matrix ordered T, E, R.
    pub fn from_global(s: &CMatrix, l: usize, n: usize, m: usize) -> Result<Self> {
        let total = l + n + m;
        if s.nrows() != total || s.ncols() != total {
            return Err(Error::dim(
                "global scattering matrix",
                format!("{total}x{total}"),
                format!("{}x{}", s.nrows(), s.ncols()),
            ));
        }
        let offs = [(0, l), (l, n), (l + n, m)];
        let blk = |i: usize, j: usize| {
            s.view((offs[i].0, offs[j].0), (offs[i].1, offs[j].1))
                .into_owned()
        };
        Ok(Self {
            s_tt: blk(0, 0),
            s_te: blk(0, 1),
            s_tr: blk(0, 2),
            s_et: blk(1, 0),
            s_ee: blk(1, 1),
            s_er: blk(1, 2),
            s_rt: blk(2, 0),
            s_re: blk(2, 1),
            s_rr: blk(2, 2),
        })
    }

    /// `(L, N, M)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.s_tt.nrows(), self.s_ee.nrows(), self.s_rr.nrows())
    }

    pub fn validate(&self) -> Result<()> {
        let (l, n, m) = self.dims();
        let rows = [l, n, m];
        let blocks = [
            [&self.s_tt, &self.s_te, &self.s_tr],
            [&self.s_et, &self.s_ee, &self.s_er],
            [&self.s_rt, &self.s_re, &self.s_rr],
        ];
        for (i, row) in blocks.iter().enumerate() {
            for (j, b) in row.iter().enumerate() {
                if b.nrows() != rows[i] || b.ncols() != rows[j] {
                    return Err(Error::dim(
                        "partitioned scattering block",
                        format!("{}x{}", rows[i], rows[j]),
                        format!("{}x{}", b.nrows(), b.ncols()),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn assemble(&self) -> CMatrix {
        let (l, n, m) = self.dims();
        let mut s = CMatrix::zeros(l + n + m, l + n + m);
        let offs = [0, l, l + n];
        let blocks = [
            [&self.s_tt, &self.s_te, &self.s_tr],
            [&self.s_et, &self.s_ee, &self.s_er],
            [&self.s_rt, &self.s_re, &self.s_rr],
        ];
        for (i, row) in blocks.iter().enumerate() {
            for (j, b) in row.iter().enumerate() {
                s.view_mut((offs[i], offs[j]), (b.nrows(), b.ncols()))
                    .copy_from(*b);
            }
        }
        s
    }

    pub fn is_passive(&self, tol: f64) -> bool {
        spectral_norm(&self.assemble()) <= 1.0 + tol
    }

    pub fn is_reciprocal(&self, tol: f64) -> bool {
        let s = self.assemble();
        (0..s.nrows()).all(|i| (0..i).all(|j| (s[(i, j)] - s[(j, i)]).norm() <= tol))
    }

    /// TX→SIM link operator (`F = S_ET`).
    pub fn illumination(&self) -> &CMatrix {
        &self.s_et
    }

    /// SIM→RX link operator (`G = S_RE`).
    pub fn observation(&self) -> &CMatrix {
        &self.s_re
    }

    /// The same network seen with the transmitter and receiver roles exchanged.
    pub fn swap_roles(&self) -> Self {
        Self {
            s_tt: self.s_rr.clone(),
            s_te: self.s_re.clone(),
            s_tr: self.s_rt.clone(),
            s_et: self.s_er.clone(),
            s_ee: self.s_ee.clone(),
            s_er: self.s_et.clone(),
            s_rt: self.s_tr.clone(),
            s_re: self.s_te.clone(),
            s_rr: self.s_tt.clone(),
        }
    }
}

/// Waves for a batch of `I` source excitations.
#[derive(Clone, Debug)]
pub struct WaveBatch {
    pub a_s: CMatrix,
    pub a_e: CMatrix,
    pub b_e: CMatrix,
    pub y: CMatrix,
    pub solved: bool,
}

impl WaveBatch {
    /// Relative residuals of `b_e = S_ET a_s + S_EE a_e` and `a_e = Γ b_e`.
    pub fn residuals(&self, s: &PartitionedScattering, gamma: &Termination) -> (f64, f64) {
        let be = &s.s_et * &self.a_s + &s.s_ee * &self.a_e;
        let r1 = (&be - &self.b_e).norm() / self.b_e.norm().max(f64::MIN_POSITIVE);
        let ae = gamma.apply(&self.b_e);
        let r2 = (&ae - &self.a_e).norm() / self.a_e.norm().max(f64::MIN_POSITIVE);
        (r1, r2)
    }
}

/// Solves the fixed-point system `(I − Γ S_EE) a_e = Γ S_ET a_s` with one
/// dense LU shared by all excitation columns.
pub fn solve_forward(
    s: &PartitionedScattering,
    gamma: &Termination,
    a_s: &CMatrix,
) -> Result<WaveBatch> {
    solve_forward_capped(s, gamma, a_s, DEFAULT_CONDITION_CAP)
}

pub fn solve_forward_capped(
    s: &PartitionedScattering,
    gamma: &Termination,
    a_s: &CMatrix,
    condition_cap: f64,
) -> Result<WaveBatch> {
    let (l, n, _) = s.dims();
    check_termination(gamma, n)?;
    if a_s.nrows() != l {
        return Err(Error::dim(
            "source excitations",
            format!("{l} rows"),
            a_s.nrows(),
        ));
    }
    let lu = fixed_point_lu(s, gamma, condition_cap)?;
    let incident = &s.s_et * a_s;
    let a_e = lu.solve(&gamma.apply(&incident));
    let b_e = incident + &s.s_ee * &a_e;
    let y = &s.s_rt * a_s + &s.s_re * &a_e;
    Ok(WaveBatch {
        a_s: a_s.clone(),
        a_e,
        b_e,
        y,
        solved: true,
    })
}

/// LU of `I − Γ S_EE`.
pub(crate) fn fixed_point_lu(
    s: &PartitionedScattering,
    gamma: &Termination,
    cap: f64,
) -> Result<DenseLu> {
    let n = s.s_ee.nrows();
    let system = CMatrix::identity(n, n) - gamma.apply(&s.s_ee);
    DenseLu::with_condition_cap(&system, cap)
}

/// End-to-end channel `H = S_RT + S_RE (Γ⁻¹ − S_EE)⁻¹ S_ET`.
pub fn end_to_end_channel(s: &PartitionedScattering, gamma: &Termination) -> Result<CMatrix> {
    let (_, n, _) = s.dims();
    check_termination(gamma, n)?;
    let gamma_inv = gamma.inverse()?;
    let core = gamma_inv.to_dense() - &s.s_ee;
    let lu = DenseLu::with_condition_cap(&core, DEFAULT_CONDITION_CAP)?;
    Ok(&s.s_rt + &s.s_re * lu.solve(&s.s_et))
}

fn check_termination(gamma: &Termination, n: usize) -> Result<()> {
    if gamma.topology().total_ports() != n {
        return Err(Error::dim(
            "termination",
            format!("{n} ports"),
            gamma.topology().total_ports(),
        ));
    }
    Ok(())
}
