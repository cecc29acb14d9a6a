//! Discrete algebraic Riccati equation solver.
//!
//! `P = AᵀPA - AᵀPB (R + BᵀPB)⁻¹ BᵀPA + Q` is solved by the
//! structure-preserving doubling iteration, with a plain fixed-point Riccati
//! sweep as fallback. The returned gain `K = -(R + BᵀPB)⁻¹ BᵀPA` makes
//! `A + BK` Schur stable, and `(P, K)` satisfy the terminal Lyapunov
//! inequality `(A+BK)ᵀP(A+BK) - P + Q + KᵀRK = 0` up to solver residual.

use nalgebra::DMatrix;

use super::{spectral_radius, symmetric_min_eig, OptimError};

const DOUBLING_CAP: usize = 200;
const FIXED_POINT_CAP: usize = 20_000;

#[derive(Debug, Clone)]
pub struct DareSolution {
    /// Stabilizing solution, symmetric positive definite.
    pub p: DMatrix<f64>,
    /// Feedback gain for `u = K x`, i.e. the closed loop is `A + B K`.
    pub k_gain: DMatrix<f64>,
}

pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DareSolution, OptimError> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(OptimError::DimensionMismatch(format!(
            "A {}x{}, B {}x{}, Q {:?}, R {:?}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            q.shape(),
            r.shape()
        )));
    }
    let q_min = symmetric_min_eig(q);
    if q_min <= 0.0 {
        return Err(OptimError::NotPositiveDefinite {
            name: "Q",
            min_eig: q_min,
        });
    }
    let r_min = symmetric_min_eig(r);
    if r_min <= 0.0 {
        return Err(OptimError::NotPositiveDefinite {
            name: "R",
            min_eig: r_min,
        });
    }

    let p = doubling(a, b, q, r)
        .or_else(|| fixed_point(a, b, q, r))
        .ok_or(OptimError::DareNoConvergence(DOUBLING_CAP + FIXED_POINT_CAP))?;

    let gram = r + b.transpose() * &p * b;
    let gram_inv = gram
        .clone()
        .try_inverse()
        .ok_or(OptimError::DareNoConvergence(DOUBLING_CAP))?;
    let k_gain = -(&gram_inv * b.transpose() * &p * a);

    let radius = spectral_radius(&(a + b * &k_gain));
    if radius.is_nan() || radius >= 1.0 {
        return Err(OptimError::DareNotStabilizing(radius));
    }
    Ok(DareSolution { p, k_gain })
}

/// Structure-preserving doubling. Quadratically convergent when `(A, B)` is
/// stabilizable; returns `None` on breakdown so the caller can fall back.
fn doubling(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let r_inv = r.clone().try_inverse()?;

    let mut a_k = a.clone();
    let mut g_k = b * &r_inv * b.transpose();
    let mut h_k = q.clone();

    for _ in 0..DOUBLING_CAP {
        let w_lu = (&eye + &g_k * &h_k).lu();
        let wa = w_lu.solve(&a_k)?; // (I + G H)^-1 A
        let wg = w_lu.solve(&g_k)?; // (I + G H)^-1 G

        let a_next = &a_k * &wa;
        let g_next = &g_k + &a_k * &wg * a_k.transpose();
        let h_next = &h_k + a_k.transpose() * &h_k * &wa;

        let diff = (&h_next - &h_k).norm();
        let scale = h_next.norm().max(1.0);

        a_k = a_next;
        g_k = (&g_next + g_next.transpose()) * 0.5;
        h_k = (&h_next + h_next.transpose()) * 0.5;

        if !h_k.iter().all(|v| v.is_finite()) {
            return None;
        }
        if diff <= 1e-15 * scale {
            return verify(a, b, q, r, &h_k).then_some(h_k);
        }
    }
    None
}

/// Plain Riccati fixed-point sweep, slow but hard to break.
fn fixed_point(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let mut p = q.clone();
    for _ in 0..FIXED_POINT_CAP {
        let gram_inv = (r + b.transpose() * &p * b).try_inverse()?;
        let next = a.transpose() * &p * a
            - a.transpose() * &p * b * gram_inv * b.transpose() * &p * a
            + q;
        let next = (&next + next.transpose()) * 0.5;
        let diff = (&next - &p).norm();
        let scale = next.norm().max(1.0);
        p = next;
        if !p.iter().all(|v| v.is_finite()) {
            return None;
        }
        if diff <= 1e-14 * scale {
            return verify(a, b, q, r, &p).then_some(p);
        }
    }
    None
}

fn verify(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> bool {
    let gram_inv = match (r + b.transpose() * p * b).try_inverse() {
        Some(g) => g,
        None => return false,
    };
    let residual =
        a.transpose() * p * a - a.transpose() * p * b * gram_inv * b.transpose() * p * a + q - p;
    residual.norm() <= 1e-10 * p.norm().max(1.0) && symmetric_min_eig(p) > 0.0
}
