//! Block-tridiagonal systems and the block-Thomas recursion.

use crate::error::{Error, Result};
use crate::linalg::{matmul, CMatrix, DenseLu};

/// Reciprocal condition estimate below which a Schur complement is rejected.
pub const MIN_RCOND: f64 = 1e-13;

/// Square block-tridiagonal matrix with `K×K` blocks.
///
/// `lower[i]` sits at block `(i+1, i)` and `upper[i]` at block `(i, i+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTridiagonal {
    pub diag: Vec<CMatrix>,
    pub lower: Vec<CMatrix>,
    pub upper: Vec<CMatrix>,
}

impl BlockTridiagonal {
    pub fn new(diag: Vec<CMatrix>, lower: Vec<CMatrix>, upper: Vec<CMatrix>) -> Result<Self> {
        let m = Self { diag, lower, upper };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let nb = self.diag.len();
        if nb == 0 {
            return Err(Error::Config(
                "block-tridiagonal matrix needs at least one block".into(),
            ));
        }
        if self.lower.len() != nb - 1 || self.upper.len() != nb - 1 {
            return Err(Error::dim(
                "off-diagonal block count",
                nb - 1,
                format!("{} lower / {} upper", self.lower.len(), self.upper.len()),
            ));
        }
        let k = self.diag[0].nrows();
        let all = self.diag.iter().chain(&self.lower).chain(&self.upper);
        for b in all {
            if b.nrows() != k || b.ncols() != k {
                return Err(Error::dim(
                    "tridiagonal block",
                    format!("{k}x{k}"),
                    format!("{}x{}", b.nrows(), b.ncols()),
                ));
            }
        }
        Ok(())
    }

    /// Keeps the tridiagonal blocks of a dense matrix partitioned into `k`-sized blocks.
    pub fn from_dense(m: &CMatrix, k: usize) -> Result<Self> {
        if k == 0 || !m.is_square() || !m.nrows().is_multiple_of(k) {
            return Err(Error::dim(
                "block partition",
                format!("multiple of {k}"),
                m.nrows(),
            ));
        }
        let nb = m.nrows() / k;
        let blk = |i: usize, j: usize| m.view((i * k, j * k), (k, k)).into_owned();
        Self::new(
            (0..nb).map(|i| blk(i, i)).collect(),
            (1..nb).map(|i| blk(i, i - 1)).collect(),
            (0..nb - 1).map(|i| blk(i, i + 1)).collect(),
        )
    }

    pub fn block_size(&self) -> usize {
        self.diag[0].nrows()
    }

    pub fn block_count(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.block_size() * self.block_count()
    }

    pub fn to_dense(&self) -> CMatrix {
        let k = self.block_size();
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        for (i, b) in self.diag.iter().enumerate() {
            out.view_mut((i * k, i * k), (k, k)).copy_from(b);
        }
        for (i, b) in self.lower.iter().enumerate() {
            out.view_mut(((i + 1) * k, i * k), (k, k)).copy_from(b);
        }
        for (i, b) in self.upper.iter().enumerate() {
            out.view_mut((i * k, (i + 1) * k), (k, k)).copy_from(b);
        }
        out
    }
}

/// Forward Schur complements `F_ℓ` and multipliers `G_ℓ` of a block-tridiagonal matrix.
///
/// Once built, it solves with the matrix and with its conjugate transpose
/// for any number of right-hand sides.
#[derive(Clone, Debug)]
pub struct ThomasFactorization {
    f_lu: Vec<DenseLu>,
    f_blocks: Vec<CMatrix>,
    /// `g[i]` is `G_{i+1}` (multiplier of block row `i + 1`).
    g_blocks: Vec<CMatrix>,
    upper: Vec<CMatrix>,
}

/// Runs the forward recursion `F₁ = B₁`, `G_ℓ = A_ℓ F_{ℓ−1}⁻¹`,
/// `F_ℓ = B_ℓ − G_ℓ C_{ℓ−1}`.
pub fn thomas_factorize(m: &BlockTridiagonal) -> Result<ThomasFactorization> {
    let nb = m.block_count();
    let mut f_lu = Vec::with_capacity(nb);
    let mut f_blocks = Vec::with_capacity(nb);
    let mut g_blocks = Vec::with_capacity(nb.saturating_sub(1));
    let mut f = m.diag[0].clone();
    for l in 0..nb {
        if l > 0 {
            let prev: &DenseLu = &f_lu[l - 1];
            // G = A F⁻¹  <=>  Gᴴ = F⁻ᴴ Aᴴ
            let g = prev.solve_adjoint(&m.lower[l - 1].adjoint()).adjoint();
            f = &m.diag[l] - matmul(&g, &m.upper[l - 1]);
            g_blocks.push(g);
        }
        let lu = DenseLu::new(&f).map_err(|_| Error::Factorization {
            block: l,
            rcond: 0.0,
        })?;
        let rcond = 1.0 / lu.condition_estimate();
        if !(rcond >= MIN_RCOND) {
            return Err(Error::Factorization { block: l, rcond });
        }
        f_lu.push(lu);
        f_blocks.push(f.clone());
    }
    Ok(ThomasFactorization {
        f_lu,
        f_blocks,
        g_blocks,
        upper: m.upper.clone(),
    })
}

impl ThomasFactorization {
    pub fn f_blocks(&self) -> &[CMatrix] {
        &self.f_blocks
    }

    pub fn g_blocks(&self) -> &[CMatrix] {
        &self.g_blocks
    }

    pub fn block_size(&self) -> usize {
        self.f_blocks[0].nrows()
    }

    pub fn block_count(&self) -> usize {
        self.f_blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.block_size() * self.block_count()
    }

    /// Solves `S X = B` for a dense right-hand side.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        self.solve_from(b, 0)
    }

    /// Forward sweep starting at block `first`; blocks of `b` above it must be zero.
    fn solve_from(&self, b: &CMatrix, first: usize) -> CMatrix {
        let k = self.block_size();
        let nb = self.block_count();
        let cols = b.ncols();
        let mut d: Vec<CMatrix> = (0..nb).map(|l| b.rows(l * k, k).into_owned()).collect();
        for l in (first + 1)..nb {
            let update = matmul(&self.g_blocks[l - 1], &d[l - 1]);
            d[l] -= update;
        }
        let mut x = CMatrix::zeros(nb * k, cols);
        let mut next = self.f_lu[nb - 1].solve(&d[nb - 1]);
        x.rows_mut((nb - 1) * k, k).copy_from(&next);
        for l in (0..nb - 1).rev() {
            let rhs = &d[l] - matmul(&self.upper[l], &next);
            next = self.f_lu[l].solve(&rhs);
            x.rows_mut(l * k, k).copy_from(&next);
        }
        x
    }

    /// Solves `Sᴴ X = B` on the same factors.
    pub fn solve_adjoint(&self, b: &CMatrix) -> CMatrix {
        let k = self.block_size();
        let nb = self.block_count();
        // Uᴴ z = b, with U block upper bidiagonal (F_ℓ, C_ℓ)
        let mut z: Vec<CMatrix> = Vec::with_capacity(nb);
        for l in 0..nb {
            let mut rhs = b.rows(l * k, k).into_owned();
            if l > 0 {
                rhs -= matmul(&self.upper[l - 1].adjoint(), &z[l - 1]);
            }
            z.push(self.f_lu[l].solve_adjoint(&rhs));
        }
        // Lᴴ x = z, with L unit block lower bidiagonal (G_ℓ)
        let mut x = CMatrix::zeros(nb * k, b.ncols());
        let mut next = z[nb - 1].clone();
        x.rows_mut((nb - 1) * k, k).copy_from(&next);
        for l in (0..nb - 1).rev() {
            next = &z[l] - matmul(&self.g_blocks[l].adjoint(), &next);
            x.rows_mut(l * k, k).copy_from(&next);
        }
        x
    }

    fn unit_strip(&self, r: usize) -> CMatrix {
        let k = self.block_size();
        let mut e = CMatrix::zeros(self.dim(), k);
        e.view_mut((r * k, 0), (k, k)).fill_with_identity();
        e
    }

    /// Block column `r` of `S⁻¹` (an `N×K` strip).
    pub fn column_strip(&self, r: usize) -> CMatrix {
        self.solve_from(&self.unit_strip(r), r)
    }

    /// Block row `r` of `S⁻¹` (a `K×N` strip).
    pub fn row_strip(&self, r: usize) -> CMatrix {
        self.solve_adjoint(&self.unit_strip(r)).adjoint()
    }

    /// Requested block columns of `S⁻¹`, in the order given.
    pub fn solve_columns(&self, block_columns: &[usize]) -> Result<Vec<CMatrix>> {
        block_columns
            .iter()
            .map(|&r| {
                if r >= self.block_count() {
                    Err(Error::IndexRange {
                        what: "block column",
                        index: r,
                        bound: self.block_count(),
                    })
                } else {
                    Ok(self.column_strip(r))
                }
            })
            .collect()
    }

    /// Full inverse assembled from all `2Q` block columns.
    pub fn full_inverse(&self) -> CMatrix {
        let k = self.block_size();
        let mut t = CMatrix::zeros(self.dim(), self.dim());
        for r in 0..self.block_count() {
            t.columns_mut(r * k, k).copy_from(&self.column_strip(r));
        }
        t
    }
}

/// Block columns of `S⁻¹` from an existing factorization.
pub fn thomas_solve_columns(
    f: &ThomasFactorization,
    block_columns: &[usize],
) -> Result<Vec<CMatrix>> {
    f.solve_columns(block_columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rel_error, ONE, ZERO};
    use crate::random::{random_matrix, random_matrix_with, rng};
    use num_complex::Complex64;

    fn c(re: f64) -> CMatrix {
        CMatrix::from_element(1, 1, Complex64::new(re, 0.0))
    }

    fn random_system(nb: usize, k: usize, seed: u64) -> BlockTridiagonal {
        let mut r = rng(seed);
        let shift = CMatrix::identity(k, k) * Complex64::new(3.0, 0.0);
        BlockTridiagonal::new(
            (0..nb)
                .map(|_| random_matrix_with(k, k, &mut r) + &shift)
                .collect(),
            (1..nb).map(|_| random_matrix_with(k, k, &mut r)).collect(),
            (1..nb).map(|_| random_matrix_with(k, k, &mut r)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_schur_complement() {
        let m = BlockTridiagonal::new(vec![c(2.0), c(2.0)], vec![c(1.0)], vec![c(1.0)]).unwrap();
        let f = thomas_factorize(&m).unwrap();
        assert!((f.f_blocks()[0][(0, 0)] - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        assert!((f.f_blocks()[1][(0, 0)] - Complex64::new(1.5, 0.0)).norm() < 1e-15);
        assert!((f.g_blocks()[0][(0, 0)] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn block_diagonal_input_has_trivial_factors() {
        let mut m = random_system(4, 3, 1);
        for b in m.lower.iter_mut().chain(m.upper.iter_mut()) {
            b.fill(ZERO);
        }
        let f = thomas_factorize(&m).unwrap();
        for (fb, b) in f.f_blocks().iter().zip(&m.diag) {
            assert_eq!(fb, b);
        }
        assert!(f.g_blocks().iter().all(|g| g.iter().all(|v| *v == ZERO)));
    }

    #[test]
    fn recursion_reconstructs_matrix() {
        let m = random_system(5, 3, 2);
        let f = thomas_factorize(&m).unwrap();
        for l in 1..5 {
            let g_f = &f.g_blocks()[l - 1] * &f.f_blocks()[l - 1];
            assert!(rel_error(&g_f, &m.lower[l - 1]) < 1e-12);
            let schur = &f.g_blocks()[l - 1] * &m.upper[l - 1] + &f.f_blocks()[l];
            assert!(rel_error(&schur, &m.diag[l]) < 1e-12);
        }
    }

    #[test]
    fn solves_match_dense_lu() {
        let m = random_system(8, 3, 3);
        let dense = m.to_dense();
        let f = thomas_factorize(&m).unwrap();
        let b = random_matrix(24, 4, 4);
        let lu = DenseLu::new(&dense).unwrap();
        assert!(rel_error(&f.solve(&b), &lu.solve(&b)) < 1e-10);
        assert!(rel_error(&f.solve_adjoint(&b), &lu.solve_adjoint(&b)) < 1e-10);
    }

    #[test]
    fn identity_strips() {
        let k = 2;
        let m = BlockTridiagonal::new(
            vec![CMatrix::identity(k, k); 3],
            vec![CMatrix::zeros(k, k); 2],
            vec![CMatrix::zeros(k, k); 2],
        )
        .unwrap();
        let f = thomas_factorize(&m).unwrap();
        let strips = thomas_solve_columns(&f, &[0, 1, 2]).unwrap();
        let id = CMatrix::identity(6, 6);
        for (r, s) in strips.iter().enumerate() {
            assert_eq!(*s, id.columns(r * k, k).into_owned());
        }
        assert!(thomas_solve_columns(&f, &[3]).is_err());
    }

    #[test]
    fn strips_and_full_inverse_match_dense_inverse() {
        let m = random_system(6, 2, 5);
        let inv = m.to_dense().try_inverse().unwrap();
        let f = thomas_factorize(&m).unwrap();
        assert!(rel_error(&f.full_inverse(), &inv) < 1e-10);
        let first = f.column_strip(0);
        assert!(rel_error(&first, &inv.columns(0, 2).into_owned()) < 1e-10);
        let last_row = f.row_strip(5);
        assert!(rel_error(&last_row, &inv.rows(10, 2).into_owned()) < 1e-10);
    }

    #[test]
    fn singular_schur_complement_names_block() {
        // B₂ − A₂ B₁⁻¹ C₁ = 1 − 1 = 0
        let m = BlockTridiagonal::new(
            vec![c(1.0), c(1.0), c(1.0)],
            vec![c(1.0), c(1.0)],
            vec![c(1.0), c(1.0)],
        )
        .unwrap();
        match thomas_factorize(&m) {
            Err(Error::Factorization { block, .. }) => assert_eq!(block, 1),
            other => panic!("expected factorization failure, got {other:?}"),
        }
    }

    #[test]
    fn dense_round_trip() {
        let m = random_system(3, 4, 6);
        assert_eq!(BlockTridiagonal::from_dense(&m.to_dense(), 4).unwrap(), m);
        assert!(BlockTridiagonal::from_dense(&CMatrix::from_element(5, 5, ONE), 2).is_err());
    }
}
