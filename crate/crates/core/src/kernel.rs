//! Positive-semidefinite kernel functions and stacked kernel-section vectors.
//!
//! A kernel section centered at a data point `c` is the single-argument
//! function `K_c(·) = K(c, ·)`. The model parameterization consumes the
//! stacked vector of all sections evaluated at a query point, so the two
//! entry points here are [`KernelSpec::eval`] for one pair and
//! [`kernel_vector`] for a whole center set.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("dimension mismatch: left has {left}, right has {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("kernel length-scale sigma2 must be positive, got {0}")]
    InvalidSigma2(f64),
    #[error("center set must contain at least one point")]
    EmptyCenterSet,
    #[error("center points {0} and {1} are identical")]
    DuplicateCenter(usize, usize),
}

/// Kernel family. Both are universal kernels, so the stacked regressors can
/// reach full rank on distinct data points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `k(a,b) = 1 / sqrt(1 + ||a-b||^2 / sigma2)`, values in (0, 1].
    InverseMultiquadric,
    /// `k(a,b) = exp(-||a-b||^2 / (2 sigma2))`.
    Gaussian,
}

/// A kernel function together with its squared length-scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub sigma2: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, sigma2: f64) -> Result<Self, KernelError> {
        if sigma2.is_nan() || sigma2 <= 0.0 {
            return Err(KernelError::InvalidSigma2(sigma2));
        }
        Ok(Self { family, sigma2 })
    }

    /// Inverse multiquadric kernel with the benchmark length-scale σ² = 200.
    pub fn default_imq() -> Self {
        Self {
            family: KernelFamily::InverseMultiquadric,
            sigma2: 200.0,
        }
    }

    /// Evaluates the kernel at a pair of points.
    pub fn eval(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64, KernelError> {
        if a.len() != b.len() {
            return Err(KernelError::DimensionMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        Ok(self.eval_sq_dist((a - b).norm_squared()))
    }

    /// Kernel value as a function of the squared distance between the inputs.
    #[inline]
    pub fn eval_sq_dist(&self, sq_dist: f64) -> f64 {
        match self.family {
            KernelFamily::InverseMultiquadric => 1.0 / (1.0 + sq_dist / self.sigma2).sqrt(),
            KernelFamily::Gaussian => (-sq_dist / (2.0 * self.sigma2)).exp(),
        }
    }
}

/// An ordered set of kernel centers, all of one dimension, pairwise distinct.
///
/// Coefficient matrices are index-coupled to the storage order, so centers
/// are never re-ordered after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSet {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl CenterSet {
    pub fn new(dim: usize, points: Vec<Vec<f64>>) -> Result<Self, KernelError> {
        if points.is_empty() {
            return Err(KernelError::EmptyCenterSet);
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(KernelError::DimensionMismatch {
                    left: dim,
                    right: p.len(),
                });
            }
            for (j, q) in points[..i].iter().enumerate() {
                if p == q {
                    return Err(KernelError::DuplicateCenter(j, i));
                }
            }
        }
        Ok(Self { dim, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

/// Stacks every kernel section of `centers` evaluated at `p` into one vector,
/// entry `i` being `K(centers[i], p)` in storage order.
pub fn kernel_vector(
    spec: &KernelSpec,
    centers: &CenterSet,
    p: &DVector<f64>,
) -> Result<DVector<f64>, KernelError> {
    if p.len() != centers.dim() {
        return Err(KernelError::DimensionMismatch {
            left: centers.dim(),
            right: p.len(),
        });
    }
    Ok(kernel_vector_unchecked(spec, centers, p.as_slice()))
}

/// Same as [`kernel_vector`] but over a raw slice whose length has already
/// been checked against the center dimension.
pub(crate) fn kernel_vector_unchecked(
    spec: &KernelSpec,
    centers: &CenterSet,
    p: &[f64],
) -> DVector<f64> {
    debug_assert_eq!(p.len(), centers.dim());
    DVector::from_iterator(
        centers.len(),
        centers.points().iter().map(|c| {
            let sq: f64 = c
                .iter()
                .zip(p.iter())
                .map(|(ci, pi)| (ci - pi) * (ci - pi))
                .sum();
            spec.eval_sq_dist(sq)
        }),
    )
}
