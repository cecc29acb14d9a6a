//! Min-norm least squares via singular-value decomposition.

use nalgebra::DMatrix;

use super::OptimError;

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    /// The coefficient matrix with `x * m ≈ y`.
    pub x: DMatrix<f64>,
    /// Numerical rank of `m`.
    pub rank: usize,
    /// Whether the numerical rank reaches `min(m.nrows(), m.ncols())`.
    pub full_rank: bool,
}

/// Solves `X * M ≈ Y` for the Frobenius-residual minimizer of minimum
/// Frobenius norm, `X = Y M†`. Singular values below
/// `max(dims) * eps * sigma_max` are treated as zero.
pub fn min_norm_lstsq(m: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<LstsqSolution, OptimError> {
    ridge_lstsq(m, y, 0.0)
}

/// Tikhonov-regularized variant: `X = Y Mᵀ (M Mᵀ + ridge I)⁻¹`, evaluated
/// through the SVD filter factors `σ / (σ² + ridge)`. `ridge = 0` recovers
/// the min-norm pseudoinverse solution.
pub fn ridge_lstsq(
    m: &DMatrix<f64>,
    y: &DMatrix<f64>,
    ridge: f64,
) -> Result<LstsqSolution, OptimError> {
    if y.ncols() != m.ncols() {
        return Err(OptimError::DimensionMismatch(format!(
            "target has {} columns, regressor has {}",
            y.ncols(),
            m.ncols()
        )));
    }
    if ridge.is_nan() || ridge < 0.0 {
        return Err(OptimError::DimensionMismatch(format!(
            "ridge weight must be nonnegative, got {ridge}"
        )));
    }

    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let sigma = &svd.singular_values;

    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * sigma_max;
    let rank = sigma.iter().filter(|&&s| s > tol).count();

    // X = Y * V * diag(filter) * Uᵀ with filter = σ/(σ²+ridge), zeroed on the
    // truncated spectrum.
    let filtered = DMatrix::from_fn(sigma.len(), sigma.len(), |i, j| {
        if i == j && sigma[i] > tol {
            sigma[i] / (sigma[i] * sigma[i] + ridge)
        } else {
            0.0
        }
    });
    let pinv_like = v_t.transpose() * filtered * u.transpose();
    let x = y * pinv_like;

    Ok(LstsqSolution {
        x,
        rank,
        full_rank: rank == m.nrows().min(m.ncols()),
    })
}
