//! Splitting the internal coupling matrix into its layered-isolated pattern
//! and a residual, plus the core inverses of the three coupling models.

use log::warn;

use crate::cells::Termination;
use crate::error::{Error, Result};
use crate::linalg::{matmul, spectral_norm, CMatrix, CVector, DenseLu, ZERO};
use crate::netcore::SimTopology;
use crate::solvers::thomas::{thomas_factorize, BlockTridiagonal, ThomasFactorization};

/// `S_EE = S_EE⁽⁰⁾ + ΔS`.
#[derive(Clone, Debug)]
pub struct CouplingDecomposition {
    pub s_ee_0: CMatrix,
    pub delta_s: CMatrix,
    /// `‖ΔS‖₂ / ‖S_EE⁽⁰⁾‖₂`.
    pub weak_ratio: f64,
    topology: SimTopology,
}

/// True when the entry `(i, j)` of `S_EE` survives in the layered-isolated model:
/// same array, or transmit array of layer `q` facing receive array of layer `q+1`.
pub fn in_isolated_pattern(topology: &SimTopology, i: usize, j: usize) -> bool {
    let (a, b) = (topology.array_of_port(i), topology.array_of_port(j));
    a == b || (a.abs_diff(b) == 1 && a.min(b) % 2 == 1)
}

pub fn split_coupling(s_ee: &CMatrix, topology: &SimTopology) -> Result<CouplingDecomposition> {
    let n = topology.total_ports();
    if s_ee.nrows() != n || s_ee.ncols() != n {
        return Err(Error::dim(
            "S_EE",
            format!("{n}x{n}"),
            format!("{}x{}", s_ee.nrows(), s_ee.ncols()),
        ));
    }
    let mut s_ee_0 = s_ee.clone();
    let mut delta_s = CMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if !in_isolated_pattern(topology, i, j) {
                delta_s[(i, j)] = s_ee[(i, j)];
                s_ee_0[(i, j)] = ZERO;
            }
        }
    }
    let base = spectral_norm(&s_ee_0);
    let residual = spectral_norm(&delta_s);
    let weak_ratio = if residual == 0.0 {
        0.0
    } else if base == 0.0 {
        f64::INFINITY
    } else {
        residual / base
    };
    Ok(CouplingDecomposition {
        s_ee_0,
        delta_s,
        weak_ratio,
        topology: *topology,
    })
}

impl CouplingDecomposition {
    pub fn topology(&self) -> &SimTopology {
        &self.topology
    }

    pub fn is_isolated(&self) -> bool {
        self.delta_s.iter().all(|v| *v == ZERO)
    }

    /// `−S_EE⁽⁰⁾` as a block-tridiagonal matrix with one `2K×2K` block per
    /// layer; the termination is added per evaluation.
    pub fn static_system(&self) -> BlockTridiagonal {
        let neg = -&self.s_ee_0;
        BlockTridiagonal::from_dense(&neg, 2 * self.topology.cells_per_layer())
            .expect("N is a multiple of 2K")
    }
}

/// Adds `Γ⁻¹` onto `−S_EE⁽⁰⁾`. Both ports of a cell belong to the same
/// layer, so every inverse cell block lands inside one diagonal block.
pub fn isolated_system(base: &BlockTridiagonal, gamma_inv: &Termination) -> BlockTridiagonal {
    let topo = gamma_inv.topology();
    let k = topo.cells_per_layer();
    let mut sys = base.clone();
    for (p, b) in gamma_inv.blocks().iter().enumerate() {
        let (q, c) = (p / k, p % k);
        let d = &mut sys.diag[q];
        d[(c, c)] += b[(0, 0)];
        d[(c, k + c)] += b[(0, 1)];
        d[(k + c, c)] += b[(1, 0)];
        d[(k + c, k + c)] += b[(1, 1)];
    }
    sys
}

/// `T = (Γ⁻¹ − S_EE)⁻¹` by dense factorization.
pub fn core_inverse_ni(gamma_inv: &Termination, s_ee: &CMatrix) -> Result<CMatrix> {
    let core = gamma_inv.to_dense() - s_ee;
    Ok(DenseLu::with_condition_cap(&core, crate::linalg::DEFAULT_CONDITION_CAP)?.inverse())
}

/// First-order Neumann approximation of the weakly coupled core inverse.
#[derive(Clone, Debug)]
pub struct NeumannInverse {
    /// `A⁻¹ + A⁻¹ ΔS A⁻¹`.
    pub t_approx: CMatrix,
    /// `A⁻¹` with `A = Γ⁻¹ − S_EE⁽⁰⁾`.
    pub a_inv: CMatrix,
    /// Power-iteration estimate of `‖A⁻¹ ΔS‖₂`.
    pub contraction: f64,
    /// `contraction < 1`.
    pub certified: bool,
}

pub fn core_inverse_w(
    decomp: &CouplingDecomposition,
    gamma_inv: &Termination,
) -> Result<NeumannInverse> {
    let sys = isolated_system(&decomp.static_system(), gamma_inv);
    let fact = thomas_factorize(&sys)?;
    Ok(neumann_from_factorization(&fact, &decomp.delta_s))
}

pub(crate) fn neumann_from_factorization(
    fact: &ThomasFactorization,
    delta_s: &CMatrix,
) -> NeumannInverse {
    let (a_inv, contraction) = neumann_parts(fact, delta_s);
    let t_approx = &a_inv + matmul(&matmul(&a_inv, delta_s), &a_inv);
    NeumannInverse {
        t_approx,
        a_inv,
        contraction,
        certified: contraction < 1.0,
    }
}

/// `A⁻¹` and the certificate `‖A⁻¹ΔS‖₂`, warning when it is not below one.
pub(crate) fn neumann_parts(fact: &ThomasFactorization, delta_s: &CMatrix) -> (CMatrix, f64) {
    let a_inv = fact.full_inverse();
    let contraction = contraction_norm(&a_inv, delta_s);
    if contraction >= 1.0 {
        warn!("Neumann contraction ‖A⁻¹ΔS‖ = {contraction:.3} >= 1; first-order inverse is not certified");
    }
    (a_inv, contraction)
}

/// Power iteration for `‖A⁻¹ΔS‖₂` using matrix-vector products only.
pub(crate) fn contraction_norm(a_inv: &CMatrix, delta_s: &CMatrix) -> f64 {
    let n = a_inv.nrows();
    if n == 0 || delta_s.iter().all(|v| *v == ZERO) {
        return 0.0;
    }
    let mut v = CVector::from_fn(n, |i, _| {
        num_complex::Complex64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.05)
    });
    v /= num_complex::Complex64::new(v.norm(), 0.0);
    let mut sigma = 0.0;
    for _ in 0..60 {
        let mv = a_inv * (delta_s * &v);
        let w = delta_s.ad_mul(&a_inv.ad_mul(&mv));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v = w / num_complex::Complex64::new(norm, 0.0);
        if (next - sigma).abs() <= 1e-6 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}
