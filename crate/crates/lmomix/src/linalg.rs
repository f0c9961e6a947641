//! Dense symmetric linear algebra helpers for the small (≤ ~10 dimensional)
//! systems the estimators produce: guarded SPD solves and PSD checks.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Condition-number ceiling past which a symmetric system is refused.
pub const COND_LIMIT: f64 = 1e12;

/// (1/2)(A + Aᵀ); quadrature and finite differences leave asymmetry dust.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (a + a.transpose())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(a).symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    ev
}

/// Fails unless every eigenvalue is ≥ −tol · max(|λ|_max, 1).
pub fn assert_psd(a: &DMatrix<f64>, tol: f64, label: &str) -> Result<()> {
    let ev = sym_eigenvalues(a);
    let lo = *ev.first().expect("nonempty matrix");
    let hi = ev.last().expect("nonempty matrix").abs().max(1.0);
    if lo < -tol * hi {
        return Err(Error::SingularMatrix(format!(
            "{label}: eigenvalue {lo:.3e} below PSD floor {:.3e}",
            -tol * hi
        )));
    }
    Ok(())
}

/// Cholesky-backed solver for a symmetric positive definite matrix, refusing
/// ill-conditioned or indefinite input instead of returning garbage.
pub struct SpdSolver {
    chol: Cholesky<f64, Dyn>,
    cond: f64,
}

impl SpdSolver {
    pub fn new(a: &DMatrix<f64>, label: &str) -> Result<Self> {
        let sym = symmetrize(a);
        let ev = sym_eigenvalues(&sym);
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo <= 0.0 {
            return Err(Error::SingularMatrix(format!(
                "{label}: not positive definite (min eigenvalue {lo:.3e})"
            )));
        }
        let cond = hi / lo;
        if cond > COND_LIMIT {
            return Err(Error::IllConditioned { cond, limit: COND_LIMIT });
        }
        let chol = Cholesky::new(sym).ok_or_else(|| {
            Error::SingularMatrix(format!("{label}: Cholesky factorization failed"))
        })?;
        Ok(Self { chol, cond })
    }

    pub fn condition(&self) -> f64 {
        self.cond
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}
