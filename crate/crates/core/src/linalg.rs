//! Small dense-matrix kernel: stability checks, Lyapunov solves and the
//! handful of factorizations the moment engine and the simulator need.
//!
//! The Lyapunov solver is Bartels–Stewart on the complex Schur form of `B`.
//! Everything here is a pure function of its inputs.

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Matrices whose largest eigenvalue real part is at or above `-STABILITY_TOLERANCE`
/// are rejected by every solver that needs a stable `B`.
pub const STABILITY_TOLERANCE: f64 = 1e-12;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub eigenvalue_real_parts: Vec<f64>,
    pub is_stable: bool,
    /// Largest eigenvalue real part.
    pub margin: f64,
}

impl StabilityReport {
    /// Stable with room to spare: margin below `-STABILITY_TOLERANCE`.
    pub fn is_safely_stable(&self) -> bool {
        self.margin < -STABILITY_TOLERANCE
    }
}

pub fn check_stability(b: &Matrix) -> Result<StabilityReport> {
    require_square(b, "B")?;
    require_finite(b, "B")?;
    let eigenvalues = eigenvalues(b)?;
    let eigenvalue_real_parts: Vec<f64> = eigenvalues.iter().map(|z| z.re).collect();
    let margin = eigenvalue_real_parts
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport {
        is_stable: margin < 0.0,
        eigenvalue_real_parts,
        margin,
    })
}

/// All eigenvalues of a real square matrix.
pub fn eigenvalues(b: &Matrix) -> Result<Vec<Complex<f64>>> {
    require_square(b, "matrix")?;
    if b.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(b.clone(), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numeric("eigenvalue iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Solves `B S + S Bᵀ = Q` for stable `B`.
///
/// When `Q` is symmetric the returned `S` is symmetrized, `S ← (S + Sᵀ)/2`.
pub fn solve_lyapunov(b: &Matrix, q: &Matrix) -> Result<Matrix> {
    LyapunovSolver::new(b)?.solve(q)
}

/// Lyapunov solver for a fixed stable `B`, reusing its Schur form across
/// right-hand sides.
#[derive(Debug, Clone)]
pub struct LyapunovSolver {
    unitary: DMatrix<Complex<f64>>,
    triangular: DMatrix<Complex<f64>>,
}

impl LyapunovSolver {
    pub fn new(b: &Matrix) -> Result<Self> {
        require_square(b, "B")?;
        let report = check_stability(b)?;
        if !report.is_safely_stable() {
            return Err(Error::Unstable {
                margin: report.margin,
            });
        }
        let n = b.nrows();
        if n == 0 {
            return Ok(LyapunovSolver {
                unitary: DMatrix::zeros(0, 0),
                triangular: DMatrix::zeros(0, 0),
            });
        }
        let bc = b.map(|x| Complex::new(x, 0.0));
        let schur = Schur::try_new(bc, SCHUR_EPS, SCHUR_MAX_ITER)
            .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
        let (unitary, triangular) = schur.unpack();
        Ok(LyapunovSolver {
            unitary,
            triangular,
        })
    }

    pub fn dim(&self) -> usize {
        self.triangular.nrows()
    }

    pub fn solve(&self, q: &Matrix) -> Result<Matrix> {
        require_square(q, "Q")?;
        let n = self.dim();
        if q.nrows() != n {
            return Err(Error::Dimension(format!(
                "Lyapunov: B is {n}x{n} but Q is {k}x{k}",
                k = q.nrows()
            )));
        }
        require_finite(q, "Q")?;
        if n == 0 {
            return Ok(Matrix::zeros(0, 0));
        }
        let (u, t) = (&self.unitary, &self.triangular);

        // B = U T U*, T upper triangular. With S̃ = U* S U and Q̃ = U* Q U the
        // equation becomes T S̃ + S̃ T* = Q̃, solved column by column from the right.
        let qc = q.map(|x| Complex::new(x, 0.0));
        let q_tilde = u.adjoint() * qc * u;

        let mut s_tilde = DMatrix::<Complex<f64>>::zeros(n, n);
        for j in (0..n).rev() {
            let mut rhs = q_tilde.column(j).clone_owned();
            for k in (j + 1)..n {
                let coeff = t[(j, k)].conj();
                rhs -= s_tilde.column(k) * coeff;
            }
            let shift = t[(j, j)].conj();
            // upper-triangular back substitution with (T + shift·I)
            for i in (0..n).rev() {
                let mut acc = rhs[i];
                for l in (i + 1)..n {
                    acc -= t[(i, l)] * s_tilde[(l, j)];
                }
                let pivot = t[(i, i)] + shift;
                if pivot.norm() == 0.0 {
                    return Err(Error::Numeric("singular Lyapunov operator".into()));
                }
                s_tilde[(i, j)] = acc / pivot;
            }
        }

        let s = (u * s_tilde * u.adjoint()).map(|z| z.re);
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("Lyapunov solution is not finite".into()));
        }
        Ok(if is_symmetric(q) { symmetrize(&s) } else { s })
    }
}

/// Solves `B Δ + Δ Bᵀ + C = 0`.
pub fn solve_lyapunov_const(b: &Matrix, c: &Matrix) -> Result<Matrix> {
    solve_lyapunov(b, &(-c))
}

/// `‖B S + S Bᵀ − Q‖_F / (‖B‖_F ‖S‖_F + ‖Q‖_F)`, zero when both scales vanish.
pub fn lyapunov_relative_residual(b: &Matrix, s: &Matrix, q: &Matrix) -> f64 {
    let residual = (b * s + s * b.transpose() - q).norm();
    let scale = b.norm() * s.norm() + q.norm();
    if scale == 0.0 {
        residual
    } else {
        residual / scale
    }
}

/// Solves `M x = rhs` by LU with partial pivoting. `rhs` may have several columns.
pub fn lu_solve(m: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    require_square(m, "matrix")?;
    if m.nrows() != rhs.nrows() {
        return Err(Error::Dimension(format!(
            "LU solve: matrix has {} rows, right-hand side {}",
            m.nrows(),
            rhs.nrows()
        )));
    }
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::Numeric("singular matrix in LU solve".into()))
}

pub fn is_symmetric(m: &Matrix) -> bool {
    m.is_square() && (m - m.transpose()).norm() <= 1e-14 * m.norm()
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// A factor `L` with `L Lᵀ = M` for symmetric positive semidefinite `M`;
/// negative round-off eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    let n = m.nrows();
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut factor = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let root = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(root);
    }
    factor
}

/// Lower Cholesky factor, or a numeric error when `m` is not positive definite.
pub fn cholesky_lower(m: &Matrix, what: &str) -> Result<Matrix> {
    nalgebra::Cholesky::new(symmetrize(m))
        .map(|c| c.l())
        .ok_or_else(|| Error::Numeric(format!("{what} is not positive definite")))
}

/// Matrix exponential.
pub fn expm(m: &Matrix) -> Matrix {
    m.clone().exp()
}

/// Principal matrix logarithm for matrices with spectrum in the open right
/// half plane away from the negative real axis, via inverse scaling and
/// squaring (Denman–Beavers square roots, then a Gregory series).
pub fn logm(m: &Matrix) -> Result<Matrix> {
    require_square(m, "matrix")?;
    let n = m.nrows();
    let identity = Matrix::identity(n, n);
    let mut x = m.clone();
    let mut squarings = 0u32;
    while (&x - &identity).norm() > 0.25 {
        x = sqrtm(&x)?;
        squarings += 1;
        if squarings > 60 {
            return Err(Error::Numeric("matrix logarithm did not converge".into()));
        }
    }
    // log(X) = 2 atanh(Z), Z = (X - I)(X + I)^-1
    let z = lu_solve(&(&x + &identity).transpose(), &(&x - &identity).transpose())?.transpose();
    let z2 = &z * &z;
    let mut term = z.clone();
    let mut sum = z.clone();
    for k in 1..60 {
        term = &term * &z2;
        let contribution = &term / (2 * k + 1) as f64;
        sum += &contribution;
        if contribution.norm() <= 1e-17 * sum.norm().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(sum * 2.0 * 2f64.powi(squarings as i32))
}

fn sqrtm(m: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    let mut y = m.clone();
    let mut z = Matrix::identity(n, n);
    for _ in 0..100 {
        let y_inv = y
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular iterate in matrix square root".into()))?;
        let z_inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular iterate in matrix square root".into()))?;
        let y_next = (&y + z_inv) * 0.5;
        let z_next = (&z + y_inv) * 0.5;
        let change = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if change <= 1e-15 * y.norm() {
            return Ok(y);
        }
    }
    Err(Error::Numeric("matrix square root did not converge".into()))
}

pub(crate) fn require_square(m: &Matrix, name: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

fn require_finite(m: &Matrix, name: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{name} has non-finite entries")))
    }
}
