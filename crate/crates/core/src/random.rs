//! Seeded random instances for tests, benchmarks and property checks.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{spectral_norm, CMatrix};
use crate::netcore::PartitionedScattering;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries with real and imaginary parts uniform on `[−1, 1)`.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
    let mut r = rng(seed);
    random_matrix_with(rows, cols, &mut r)
}

pub fn random_matrix_with<R: Rng>(rows: usize, cols: usize, r: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
    })
}

/// Dense random `(L+N+M)`-port network rescaled to the given spectral norm.
pub fn random_passive_scattering(
    l: usize,
    n: usize,
    m: usize,
    norm: f64,
    seed: u64,
) -> PartitionedScattering {
    let mut s = random_matrix(l + n + m, l + n + m, seed);
    let sigma = spectral_norm(&s);
    s *= Complex64::new(norm / sigma, 0.0);
    PartitionedScattering::from_global(&s, l, n, m).expect("consistent dimensions")
}

/// Transpose-symmetric variant of [`random_passive_scattering`].
pub fn random_reciprocal_scattering(
    l: usize,
    n: usize,
    m: usize,
    norm: f64,
    seed: u64,
) -> PartitionedScattering {
    let a = random_matrix(l + n + m, l + n + m, seed);
    let mut s = &a + a.transpose();
    let sigma = spectral_norm(&s);
    s *= Complex64::new(norm / sigma, 0.0);
    PartitionedScattering::from_global(&s, l, n, m).expect("consistent dimensions")
}

/// Phases uniform on `(−π, π]`.
pub fn random_phases(count: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| PI - r.random_range(0.0..2.0 * PI))
        .collect()
}
