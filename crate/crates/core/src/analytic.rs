//! Exact velocity-form matrices of the pendulum, assembled from the analytic
//! Jacobians of the plant map. These back the model-based baseline controller
//! and serve as a gradient oracle for the learned model.

use nalgebra::{DMatrix, DVector, Matrix1x2, Matrix2, Vector2};

use crate::model::{ModelDims, VelocityMatrixSource};
use crate::plant::PendulumParams;

/// Velocity-form matrices evaluated at the current sample, adopting the
/// scheduling approximation that the mean-value point coincides with it.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticVelocityModel {
    pub params: PendulumParams,
}

impl AnalyticVelocityModel {
    pub fn new(params: PendulumParams) -> Self {
        Self { params }
    }
}

/// Exact Jacobians of the plant map at `(x, u)`:
/// `∂f/∂x`, `∂f/∂u` and `∂h/∂x`.
pub fn analytic_gradients(
    params: &PendulumParams,
    x: &Vector2<f64>,
    _u: f64,
) -> (Matrix2<f64>, Vector2<f64>, Matrix1x2<f64>) {
    let ts = params.sampling_time;
    let j = params.inertia();
    let dfdx = Matrix2::new(
        1.0 - params.friction * ts / j,
        -params.mass * params.length * params.gravity * ts / (2.0 * j) * x[1].cos(),
        ts,
        1.0,
    );
    let dfdu = Vector2::new(ts / j, 0.0);
    let dhdx = Matrix1x2::new(0.0, 1.0);
    (dfdx, dfdu, dhdx)
}

/// Velocity-form blocks for the extended state `col(y_prev, Δx)`:
///
/// ```text
/// A = [ I  ∂h/∂x ]    B = [   0   ]    C = [ I  ∂h/∂x ]
///     [ 0  ∂f/∂x ]        [ ∂f/∂u ]
/// ```
pub fn analytic_velocity_matrices(
    params: &PendulumParams,
    x: &Vector2<f64>,
    u: f64,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (dfdx, dfdu, dhdx) = analytic_gradients(params, x, u);
    let mut a = DMatrix::<f64>::zeros(3, 3);
    a[(0, 0)] = 1.0;
    a[(0, 1)] = dhdx[(0, 0)];
    a[(0, 2)] = dhdx[(0, 1)];
    for r in 0..2 {
        for c in 0..2 {
            a[(r + 1, c + 1)] = dfdx[(r, c)];
        }
    }
    let mut b = DMatrix::<f64>::zeros(3, 1);
    b[(1, 0)] = dfdu[0];
    b[(2, 0)] = dfdu[1];
    let mut c = DMatrix::<f64>::zeros(1, 3);
    c[(0, 0)] = 1.0;
    c[(0, 1)] = dhdx[(0, 0)];
    c[(0, 2)] = dhdx[(0, 1)];
    (a, b, c)
}

impl AnalyticVelocityModel {
    /// Velocity matrices at a scheduling point given as dynamic vectors, the
    /// shape the controller works with.
    pub fn matrices_at(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let x2 = Vector2::new(x[0], x[1]);
        analytic_velocity_matrices(&self.params, &x2, u[0])
    }
}

impl VelocityMatrixSource for AnalyticVelocityModel {
    fn dims(&self) -> ModelDims {
        ModelDims { n: 2, m: 1, p: 1 }
    }

    fn velocity_matrices(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        self.matrices_at(x, u)
    }
}
