//! Dense complex linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, Dyn, Matrix2, PermutationSequence};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type Block2 = Matrix2<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// Default cap on the 1-norm condition estimate of a fixed-point system.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// LU factorization with partial pivoting that can solve with both `A` and `A^H`.
#[derive(Clone, Debug)]
pub struct DenseLu {
    lower: CMatrix,
    upper: CMatrix,
    perm: PermutationSequence<Dyn>,
    norm1: f64,
}

impl DenseLu {
    pub fn new(a: &CMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dim(
                "dense LU",
                "square matrix",
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        let norm1 = norm_1(a);
        let lu = a.clone().lu();
        let upper = lu.u();
        if (0..upper.nrows()).any(|i| upper[(i, i)].norm() == 0.0) {
            return Err(Error::Singular("dense LU"));
        }
        Ok(Self {
            lower: lu.l(),
            upper,
            perm: lu.p().clone(),
            norm1,
        })
    }

    /// Factorizes `a` and rejects it when the condition estimate exceeds `cap`.
    pub fn with_condition_cap(a: &CMatrix, cap: f64) -> Result<Self> {
        let lu = Self::new(a)?;
        let condition = lu.condition_estimate();
        if !(condition <= cap) {
            return Err(Error::IllConditioned { condition, cap });
        }
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.upper.nrows()
    }

    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let mut x = b.clone();
        self.perm.permute_rows(&mut x);
        let y = self
            .lower
            .solve_lower_triangular(&x)
            .expect("unit lower factor is nonsingular");
        self.upper
            .solve_upper_triangular(&y)
            .expect("checked nonzero pivots")
    }

    /// Solves `A^H x = b` on the same factors.
    pub fn solve_adjoint(&self, b: &CMatrix) -> CMatrix {
        let z = self
            .upper
            .ad_solve_upper_triangular(b)
            .expect("checked nonzero pivots");
        let mut w = self
            .lower
            .ad_solve_lower_triangular(&z)
            .expect("unit lower factor is nonsingular");
        self.perm.inv_permute_rows(&mut w);
        w
    }

    pub fn inverse(&self) -> CMatrix {
        self.solve(&CMatrix::identity(self.dim(), self.dim()))
    }

    /// Hager/Higham estimate of the 1-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        let mut x = CMatrix::from_element(n, 1, Complex64::new(1.0 / n as f64, 0.0));
        let mut estimate = 0.0;
        let mut last_index = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            estimate = y.iter().map(|v| v.norm()).sum::<f64>();
            if !estimate.is_finite() {
                return f64::INFINITY;
            }
            let xi = y.map(|v| if v.norm() > 0.0 { v / v.norm() } else { ONE });
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |acc, it| if it.1 > acc.1 { it } else { acc });
            let ztx = z
                .iter()
                .zip(x.iter())
                .map(|(a, b)| a.conj() * b)
                .sum::<Complex64>()
                .re;
            if zmax <= ztx || j == last_index {
                break;
            }
            last_index = j;
            x.fill(ZERO);
            x[(j, 0)] = ONE;
        }
        // one extra alternating-sign probe guards against underestimation
        let probe = CMatrix::from_fn(n, 1, |i, _| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            Complex64::new(sign * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
        });
        let alt = 2.0 * self.solve(&probe).iter().map(|v| v.norm()).sum::<f64>() / (3.0 * n as f64);
        estimate.max(alt) * self.norm1
    }
}

/// `A·B` through a cache-blocked complex GEMM.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul dimension mismatch");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = CMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: Complex64 is repr(C) {re, im}, the same layout as [f64; 2];
    // all three buffers are dense column-major with the strides given.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

pub fn norm_1(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest singular value via a full SVD.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Largest singular value by power iteration on `A^H A`.
pub fn spectral_norm_power(a: &CMatrix, max_iters: usize, tol: f64) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // deterministic, generic start vector
    let mut v = CVector::from_fn(n, |i, _| {
        Complex64::new(1.0 + 0.37 * i as f64, 0.11 * (i % 7) as f64)
    });
    v /= Complex64::from(v.norm());
    let mut sigma = 0.0;
    for _ in 0..max_iters {
        let w = a * &v;
        let next = w.norm();
        let mut u = a.adjoint() * w;
        let un = u.norm();
        if un == 0.0 {
            return 0.0;
        }
        u /= Complex64::from(un);
        v = u;
        if (next - sigma).abs() <= tol * next {
            sigma = next;
            break;
        }
        sigma = next;
    }
    sigma
}

pub fn frobenius_sq(a: &CMatrix) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

/// `trace(X^H Y)`.
pub fn inner(x: &CMatrix, y: &CMatrix) -> Complex64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// `‖a − b‖_F / max(‖b‖_F, tiny)`.
pub fn rel_error(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = (a - b).norm();
    diff / b.norm().max(f64::MIN_POSITIVE)
}

pub fn det2(m: &Block2) -> Complex64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

pub fn inv2(m: &Block2) -> Option<Block2> {
    let det = det2(m);
    if det.norm() == 0.0 {
        return None;
    }
    Some(Block2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// Wraps a phase to `(−π, π]`.
pub fn wrap_phase(eta: f64) -> f64 {
    use std::f64::consts::PI;
    let w = eta.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}
