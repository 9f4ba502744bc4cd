//! Shared test support: a Kronecker-vectorized Lyapunov oracle and random
//! stable models.
#![allow(dead_code)]

use asymopt::linalg::{Matrix, Vector};
use asymopt::{FactorModel, Strategy};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Solves `B S + S Bᵀ = Q` through `(I ⊗ B + B ⊗ I) vec S = vec Q`.
pub fn kronecker_lyapunov(b: &Matrix, q: &Matrix) -> Matrix {
    let n = b.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(b) + b.kronecker(&eye);
    let rhs = Vector::from_column_slice(q.as_slice());
    let vec_s = op.lu().solve(&rhs).expect("Kronecker operator is singular");
    Matrix::from_column_slice(n, n, vec_s.as_slice())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random stable matrix with spectral abscissa in `[−1.0, −0.05]`; generally
/// non-normal with complex eigenvalues.
pub fn random_stable(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let raw = gaussian(rng, n, n) * 0.5;
    let abscissa = raw
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let margin = rng.random_range(0.05..1.0);
    raw - Matrix::identity(n, n) * (abscissa + margin)
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let g = gaussian(rng, n, n);
    (&g + g.transpose()) * 0.5
}

/// Random valid model with `m` assets and `n` factors, scaled to monthly
/// magnitudes.
pub fn random_model(rng: &mut ChaCha8Rng, m: usize, n: usize) -> FactorModel {
    let k = m + n;
    FactorModel::new(
        Vector::from_fn(m, |_, _| rng.random_range(-0.02..0.03)),
        gaussian(rng, m, n) * 0.02,
        random_stable(rng, n),
        gaussian(rng, m, k) * 0.05,
        gaussian(rng, n, k) * 0.5,
    )
    .expect("random model is valid")
}

pub fn random_strategy(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Strategy {
    Strategy::new(
        Vector::from_fn(m, |_, _| rng.random_range(-3.0..3.0)),
        Matrix::from_fn(m, n, |_, _| rng.random_range(-3.0..3.0)),
    )
    .expect("shapes match")
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, k: usize) -> Matrix {
    gaussian(rng, k, k).qr().q()
}

pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
