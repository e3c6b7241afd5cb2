//! Numerical kernels: linear programming, dense quadratic programming, the
//! discrete algebraic Riccati equation and symmetric eigenvalues.

mod dare;
mod lp;
mod qp;

use nalgebra::DMatrix;
use thiserror::Error;

pub use dare::{solve_dare, solve_stein, DareSolution};
pub use lp::{is_feasible, solve_lp, LpSolution, LpStatus};
pub use qp::{solve_qp, QpFactor, QpProblem, QpSolution, QpStatus};

/// Default absolute tolerance for QP optimality.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default iteration budget for QP solves.
pub const DEFAULT_MAX_ITER: usize = 20_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("iteration limit reached in {0}")]
    IterationLimit(&'static str),
    #[error("Hessian is not positive definite on the feasible subspace")]
    NotConvex,
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("pair (A, B) is not stabilizable: {0}")]
    NotStabilizable(String),
    #[error("singular matrix in {0}")]
    Singular(&'static str),
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn eig_min_sym(m: &DMatrix<f64>) -> Result<f64, SolverError> {
    if !m.is_square() {
        return Err(SolverError::Dimension(format!(
            "eig_min_sym: {}x{} is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * (1.0 + m.amax()) {
        return Err(SolverError::NotSymmetric(asym));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eig_min_examples() {
        assert_abs_diff_eq!(
            eig_min_sym(&DMatrix::identity(3, 3)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -2.0]));
        assert_abs_diff_eq!(eig_min_sym(&d).unwrap(), -2.0, epsilon = 1e-12);
        // characteristic polynomial (2-λ)² - 1 = 0 → λ ∈ {1, 3}
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_abs_diff_eq!(eig_min_sym(&m).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eig_min_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(eig_min_sym(&m), Err(SolverError::NotSymmetric(_))));
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let t = 0.3f64;
        let m = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]) * 0.9;
        assert_abs_diff_eq!(spectral_radius(&m), 0.9, epsilon = 1e-12);
    }
}
