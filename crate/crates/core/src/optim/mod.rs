//! Self-contained dense numerical backends: a convex QP solver, an LP solver,
//! a discrete algebraic Riccati solver and min-norm least squares.
//!
//! Everything here is deterministic: identical inputs produce bitwise
//! identical outputs, which the controller and the artifact emitters rely on.

mod dare;
mod lp;
mod lstsq;
mod qp;

pub use dare::{solve_dare, DareSolution};
pub use lp::{solve_lp, LpSolution, LpStatus};
pub use lstsq::{min_norm_lstsq, ridge_lstsq, LstsqSolution};
pub use qp::{solve_qp, QpProblem, QpSolution, QpStatus};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cost matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    IndefiniteCost(f64),
    #[error("{name} must be symmetric positive definite (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { name: &'static str, min_eig: f64 },
    #[error("Riccati iteration did not converge after {0} iterations")]
    DareNoConvergence(usize),
    #[error("Riccati solution is not stabilizing (spectral radius {0:.6})")]
    DareNotStabilizing(f64),
}

/// Smallest eigenvalue of a symmetric matrix (the input is symmetrized first).
pub fn symmetric_min_eig(m: &DMatrix<f64>) -> f64 {
    symmetric_max_eig(&-(m.clone()))
        .map(|v| -v)
        .unwrap_or(f64::NAN)
}

/// Largest eigenvalue of a symmetric matrix, or `None` for an empty matrix.
pub fn symmetric_max_eig(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 {
        return None;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .reduce(f64::max)
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}
