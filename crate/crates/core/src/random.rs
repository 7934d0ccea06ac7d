//! Seeded random draws of matrices and manifold points.
//!
//! Everything here runs on [`ChaCha8Rng`] so that a seed reproduces the same
//! stream on every platform.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::spd::{sym_exp, SpdMatrix};
use crate::stiefel::StiefelPoint;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // column-major fill order is part of the reproducibility contract
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Symmetric matrix with standard normal entries on and above the diagonal.
pub fn symmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = gaussian(rng);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// `exp(scale * S)` for a random symmetric `S` normalised to unit Frobenius norm.
///
/// The AIRM distance from the identity to the result is exactly `scale`.
pub fn spd_with_spread<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> SpdMatrix {
    let s = symmetric(n, rng);
    let norm = s.norm();
    let s = if norm > 0.0 { s * (scale / norm) } else { s };
    sym_exp(&s).expect("exponential of a symmetric matrix is SPD")
}

/// A moderately conditioned SPD matrix, for tests and initialisation.
pub fn spd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SpdMatrix {
    let spread = 0.5 * (n as f64).sqrt();
    spd_with_spread(n, spread, rng)
}

/// Uniformly distributed point on St(d, m) via QR of a Gaussian matrix.
pub fn stiefel<R: Rng + ?Sized>(m: usize, d: usize, rng: &mut R) -> StiefelPoint {
    let g = gaussian_matrix(m, d, rng);
    StiefelPoint::orthonormalize(&g).expect("gaussian matrix has full column rank")
}
