//! Offset-free tracking controllers solved by sequential quadratic
//! programming.
//!
//! Each time step freezes the scheduling sequence, condenses the predicted
//! extended states into a QP over input increments, re-simulates the velocity
//! model with the minimizer to refresh the schedule, and repeats until the
//! schedule stops moving. Applying `u_k = u_{k-1} + Δu*_0` gives the built-in
//! integral action that removes steady-state offsets.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    build_prediction_matrices, ExtendedState, ModelDims, ModelError, PredictionMatrices,
    SchedulePoint, VelocityMatrixSource,
};
use crate::optim::{solve_qp, symmetric_min_eig, OptimError, QpProblem, QpStatus};
use crate::polytope::Polytope;
use crate::terminal::TerminalIngredients;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("invalid controller config: {0}")]
    Config(String),
    #[error("QP infeasible at SQP iteration {iteration} (terminal softening disabled)")]
    QpInfeasible { iteration: usize },
    #[error("QP solver failed at SQP iteration {iteration} with status {status:?}, KKT residual {kkt:.3e}")]
    QpFailed {
        iteration: usize,
        status: QpStatus,
        kkt: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("terminal ingredients are for reference {have}, controller asked for {want}")]
    ReferenceMismatch { have: f64, want: f64 },
}

/// Horizon, weights, tolerances and constraint sets of one controller.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub horizon: usize,
    /// Stage weight on `z - r`, positive definite, `(p+n)×(p+n)`.
    pub q: DMatrix<f64>,
    /// Weight on input increments, positive definite, `m×m`.
    pub r: DMatrix<f64>,
    /// SQP convergence tolerance on the schedule displacement.
    pub eps: f64,
    pub max_sqp_iters: usize,
    /// State constraint set in absolute `z` coordinates.
    pub z_set: Polytope,
    /// Increment constraint set.
    pub du_set: Polytope,
    /// Exact-penalty weight for the optional terminal slack; 0 keeps the
    /// terminal constraint hard.
    pub terminal_slack_weight: f64,
    /// Tolerance handed to the QP backend.
    pub qp_tol: f64,
}

impl ControllerConfig {
    /// Benchmark constants: `N = 20`, `Q = 1000 I`, `R = 10`, `ε = 1e-8`,
    /// `|z_i| ≤ 2`, `|Δu| ≤ 2`, hard terminal constraint.
    pub fn benchmark(dims: &ModelDims) -> Self {
        Self {
            horizon: 20,
            q: DMatrix::identity(dims.nz(), dims.nz()) * 1000.0,
            r: DMatrix::identity(dims.m, dims.m) * 10.0,
            eps: 1e-8,
            max_sqp_iters: 30,
            z_set: Polytope::box_nd(dims.nz(), 2.0),
            du_set: Polytope::box_nd(dims.m, 2.0),
            terminal_slack_weight: 0.0,
            qp_tol: 1e-10,
        }
    }

    pub fn validate(&self, dims: &ModelDims) -> Result<(), ControllerError> {
        if self.horizon == 0 {
            return Err(ControllerError::Config("horizon must be at least 1".into()));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(ControllerError::Config(format!(
                "SQP tolerance must be positive, got {}",
                self.eps
            )));
        }
        if self.max_sqp_iters == 0 {
            return Err(ControllerError::Config("need at least one SQP iteration".into()));
        }
        let nz = dims.nz();
        if self.q.shape() != (nz, nz) {
            return Err(ControllerError::Config(format!(
                "Q must be {nz}x{nz}, got {:?}",
                self.q.shape()
            )));
        }
        if self.r.shape() != (dims.m, dims.m) {
            return Err(ControllerError::Config(format!(
                "R must be {}x{}, got {:?}",
                dims.m,
                dims.m,
                self.r.shape()
            )));
        }
        if symmetric_min_eig(&self.q) <= 0.0 {
            return Err(ControllerError::Config("Q must be positive definite".into()));
        }
        if symmetric_min_eig(&self.r) <= 0.0 {
            return Err(ControllerError::Config("R must be positive definite".into()));
        }
        if self.z_set.dim() != nz || self.du_set.dim() != dims.m {
            return Err(ControllerError::Config(
                "constraint sets do not match the model dimensions".into(),
            ));
        }
        if self.terminal_slack_weight < 0.0 {
            return Err(ControllerError::Config(
                "terminal slack weight must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// The fixed-length scheduling sequence `ρ_{0..N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSequence {
    points: Vec<SchedulePoint>,
}

impl ScheduleSequence {
    pub fn new(points: Vec<SchedulePoint>) -> Self {
        assert!(!points.is_empty(), "schedule cannot be empty");
        Self { points }
    }

    /// The cold-start schedule: the current state and input held across the
    /// horizon.
    pub fn constant(x: &DVector<f64>, u: &DVector<f64>, horizon: usize) -> Self {
        Self::new(
            (0..horizon)
                .map(|_| SchedulePoint {
                    x: x.clone(),
                    u: u.clone(),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SchedulePoint] {
        &self.points
    }

    /// Distance to another schedule of the same length, the quantity the SQP
    /// convergence test monitors.
    pub fn distance(&self, other: &ScheduleSequence) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (&a.x - &b.x).norm_squared() + (&a.u - &b.u).norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

/// Warm start for the next time step: drop the first point, shift left and
/// duplicate the final point.
pub fn shift_warm_start(prev: &ScheduleSequence) -> ScheduleSequence {
    let mut points: Vec<SchedulePoint> = prev.points[1..].to_vec();
    points.push(prev.points.last().expect("nonempty schedule").clone());
    ScheduleSequence::new(points)
}

/// Controller memory across time steps.
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub u_prev: DVector<f64>,
    pub x_prev: Option<DVector<f64>>,
    pub y_prev: Option<DVector<f64>>,
    pub warm_schedule: Option<ScheduleSequence>,
}

impl ControllerState {
    pub fn new(m: usize) -> Self {
        Self {
            u_prev: DVector::zeros(m),
            x_prev: None,
            y_prev: None,
            warm_schedule: None,
        }
    }

    pub fn with_initial_input(u_prev: DVector<f64>) -> Self {
        Self {
            u_prev,
            x_prev: None,
            y_prev: None,
            warm_schedule: None,
        }
    }
}

/// Per-step solver diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub sqp_iterations: usize,
    /// Optimal value including the fixed initial-stage cost.
    pub cost: f64,
    pub qp_statuses: Vec<QpStatus>,
    pub schedule_residual: f64,
    pub converged: bool,
    pub terminal_slack: f64,
    /// Wall-clock seconds spent in this solve.
    pub wall_time: f64,
}

/// Result of one receding-horizon step.
#[derive(Debug, Clone)]
pub struct StepSolution {
    /// Minimizing increment stack, length `N·m`.
    pub du_stack: DVector<f64>,
    /// Input to apply: `u_prev + Δu*_0`.
    pub u: DVector<f64>,
    /// Converged schedule, the warm start for the next step.
    pub schedule: ScheduleSequence,
    /// QP-implied stacked prediction `Psi z0 + Gamma du_stack`.
    pub predicted_z: DVector<f64>,
    pub report: SolveReport,
}

/// Pieces of the condensed QP needed to recover costs and predictions.
pub struct CondensedQp {
    pub problem: QpProblem,
    /// `Psi z0` stacked offsets.
    pub offset: DVector<f64>,
    /// Stacked reference (one copy of `r` per stage).
    pub r_stack: DVector<f64>,
    /// Constant cost contribution `(z0-r)ᵀQ(z0-r) + w0ᵀ Q̄ w0`.
    pub cost_const: f64,
    /// Whether a slack variable was appended to the decision vector.
    pub softened: bool,
}

/// Builds the condensed QP over the increment stack for a frozen schedule.
/// Stage costs weight `z_1..z_{N-1}` with `Q` and `z_N` with the terminal
/// weight; the fixed `z_0` term enters only the reported cost.
pub fn condense_qp(
    pm: &PredictionMatrices,
    z0: &DVector<f64>,
    cfg: &ControllerConfig,
    ti: &TerminalIngredients,
) -> Result<CondensedQp, ControllerError> {
    let nz = pm.nz;
    let m = pm.m;
    let n_steps = pm.horizon;
    if z0.len() != nz {
        return Err(ControllerError::DimensionMismatch(format!(
            "z0 has length {}, expected {nz}",
            z0.len()
        )));
    }

    let nv = n_steps * m;
    let soft = cfg.terminal_slack_weight > 0.0;
    let total_vars = nv + usize::from(soft);

    let offset = &pm.psi * z0;
    let mut r_stack = DVector::<f64>::zeros(n_steps * nz);
    for i in 0..n_steps {
        r_stack.rows_mut(i * nz, nz).copy_from(&ti.r);
    }
    let w0 = &offset - &r_stack;

    // Q̄ Γ and Q̄ w0 block by block (Q on stages 1..N-1, P on stage N).
    let mut q_gamma = DMatrix::<f64>::zeros(n_steps * nz, nv);
    let mut q_w0 = DVector::<f64>::zeros(n_steps * nz);
    for i in 0..n_steps {
        let weight = if i + 1 == n_steps { &ti.weight } else { &cfg.q };
        let gamma_block = pm.gamma.view((i * nz, 0), (nz, nv));
        q_gamma
            .view_mut((i * nz, 0), (nz, nv))
            .copy_from(&(weight * gamma_block));
        let w0_block = w0.rows(i * nz, nz);
        q_w0.rows_mut(i * nz, nz).copy_from(&(weight * w0_block));
    }

    let mut h = DMatrix::<f64>::zeros(total_vars, total_vars);
    h.view_mut((0, 0), (nv, nv))
        .copy_from(&((pm.gamma.transpose() * &q_gamma) * 2.0));
    for i in 0..n_steps {
        for a in 0..m {
            for b in 0..m {
                h[(i * m + a, i * m + b)] += 2.0 * cfg.r[(a, b)];
            }
        }
    }
    let mut f = DVector::<f64>::zeros(total_vars);
    f.rows_mut(0, nv)
        .copy_from(&((pm.gamma.transpose() * &q_w0) * 2.0));
    if soft {
        f[nv] = cfg.terminal_slack_weight;
    }

    // Constraint rows: per-stage state sets, per-stage increment sets and the
    // terminal set on (z_N - r).
    let (az, bz) = cfg.z_set.rows();
    let (adu, bdu) = cfg.du_set.rows();
    let (at, bt) = ti.set.rows();
    let rows_z = az.nrows() * n_steps;
    let rows_du = adu.nrows() * n_steps;
    let rows_t = at.nrows();
    let total_rows = rows_z + rows_du + rows_t + usize::from(soft);

    let mut a_in = DMatrix::<f64>::zeros(total_rows, total_vars);
    let mut b_in = DVector::<f64>::zeros(total_rows);
    let mut row = 0;

    for i in 0..n_steps {
        let gamma_block = pm.gamma.view((i * nz, 0), (nz, nv));
        let mapped = az * gamma_block;
        a_in.view_mut((row, 0), (az.nrows(), nv)).copy_from(&mapped);
        let shift = az * offset.rows(i * nz, nz);
        for j in 0..az.nrows() {
            b_in[row + j] = bz[j] - shift[j];
        }
        row += az.nrows();
    }
    for i in 0..n_steps {
        a_in.view_mut((row, i * m), (adu.nrows(), m)).copy_from(adu);
        for j in 0..adu.nrows() {
            b_in[row + j] = bdu[j];
        }
        row += adu.nrows();
    }
    {
        let last = n_steps - 1;
        let gamma_block = pm.gamma.view((last * nz, 0), (nz, nv));
        let mapped = at * gamma_block;
        a_in.view_mut((row, 0), (at.nrows(), nv)).copy_from(&mapped);
        let shift = at * (offset.rows(last * nz, nz) - &ti.r);
        for j in 0..at.nrows() {
            b_in[row + j] = bt[j] - shift[j];
            if soft {
                a_in[(row + j, nv)] = -1.0;
            }
        }
        row += at.nrows();
    }
    if soft {
        a_in[(row, nv)] = -1.0;
        b_in[row] = 0.0;
    }

    let cost_const = {
        let dz0 = z0 - &ti.r;
        (dz0.transpose() * &cfg.q * &dz0)[(0, 0)] + w0.dot(&q_w0)
    };

    let problem = QpProblem::with_inequalities(h, f, a_in, b_in)?;
    Ok(CondensedQp {
        problem,
        offset,
        r_stack,
        cost_const,
        softened: soft,
    })
}

/// Runs the fixed-point SQP loop for one measurement. `y_prev` is the output
/// of the previous sample; the initial extended state is
/// `z0 = col(y_prev, x_k - x_prev)` with a zero increment on the first call.
pub fn solve_step<S: VelocityMatrixSource>(
    source: &S,
    state: &ControllerState,
    x_k: &DVector<f64>,
    y_prev: &DVector<f64>,
    cfg: &ControllerConfig,
    ti: &TerminalIngredients,
) -> Result<StepSolution, ControllerError> {
    let start = Instant::now();
    let dims = source.dims();
    cfg.validate(&dims)?;
    if x_k.len() != dims.n || y_prev.len() != dims.p {
        return Err(ControllerError::DimensionMismatch(
            "measurement does not match model dimensions".into(),
        ));
    }

    let dx0 = match &state.x_prev {
        Some(x_prev) => x_k - x_prev,
        None => DVector::zeros(dims.n),
    };
    let z0 = ExtendedState::new(y_prev.clone(), dx0).as_vector();

    let mut schedule = match &state.warm_schedule {
        Some(prev) => shift_warm_start(prev),
        None => ScheduleSequence::constant(x_k, &state.u_prev, cfg.horizon),
    };

    let n_steps = cfg.horizon;
    let m = dims.m;
    let mut qp_statuses = Vec::new();
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut du_stack = DVector::<f64>::zeros(n_steps * m);
    let mut terminal_slack = 0.0;
    let mut cost = f64::NAN;
    let mut predicted_z = DVector::<f64>::zeros(n_steps * dims.nz());
    let mut iterations = 0;

    while iterations < cfg.max_sqp_iters {
        iterations += 1;

        let pm = build_prediction_matrices(source, schedule.points())?;
        let condensed = condense_qp(&pm, &z0, cfg, ti)?;
        let sol = solve_qp(&condensed.problem, cfg.qp_tol);
        qp_statuses.push(sol.status);
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => {
                return Err(ControllerError::QpInfeasible { iteration: iterations });
            }
            QpStatus::MaxIters => {
                // Accept mildly inaccurate solves, fail on garbage.
                if sol.kkt_residual.is_nan() || sol.kkt_residual > 1e-6 {
                    return Err(ControllerError::QpFailed {
                        iteration: iterations,
                        status: sol.status,
                        kkt: sol.kkt_residual,
                    });
                }
            }
        }

        du_stack.copy_from(&sol.v.rows(0, n_steps * m));
        terminal_slack = if condensed.softened {
            sol.v[n_steps * m]
        } else {
            0.0
        };
        cost = sol.objective + condensed.cost_const;
        predicted_z = &condensed.offset + &pm.gamma * &du_stack;

        // Reconstruct the input stack and re-simulate the model to refresh
        // the schedule; predicted states accumulate the rolled increments.
        let mut u_stack = Vec::with_capacity(n_steps);
        let mut u_run = state.u_prev.clone();
        for j in 0..n_steps {
            u_run += du_stack.rows(j * m, m);
            u_stack.push(u_run.clone());
        }
        let mut points = Vec::with_capacity(n_steps);
        let mut x_hat = x_k.clone();
        let mut z = z0.clone();
        for (j, u_j) in u_stack.iter().enumerate() {
            points.push(SchedulePoint {
                x: x_hat.clone(),
                u: u_j.clone(),
            });
            let (a_hat, b_hat, _) = source.velocity_matrices(&x_hat, u_j);
            z = &a_hat * &z + &b_hat * du_stack.rows(j * m, m);
            x_hat += z.rows(dims.p, dims.n);
        }
        let next = ScheduleSequence::new(points);
        residual = next.distance(&schedule);
        schedule = next;
        if residual <= cfg.eps {
            converged = true;
            break;
        }
    }

    let u = &state.u_prev + du_stack.rows(0, m);
    Ok(StepSolution {
        du_stack,
        u,
        schedule,
        predicted_z,
        report: SolveReport {
            sqp_iterations: iterations,
            cost,
            qp_statuses,
            schedule_residual: residual,
            converged,
            terminal_slack,
            wall_time: start.elapsed().as_secs_f64(),
        },
    })
}

/// Step solve against the learned kernel model (the data-driven controller).
pub fn solve_vkdpc(
    model: &crate::model::VelocityKernelModel,
    state: &ControllerState,
    x_k: &DVector<f64>,
    y_prev: &DVector<f64>,
    cfg: &ControllerConfig,
    ti: &TerminalIngredients,
) -> Result<StepSolution, ControllerError> {
    solve_step(model, state, x_k, y_prev, cfg, ti)
}

/// Step solve against the analytic velocity model (the model-based baseline).
/// Same contract as [`solve_vkdpc`] with the matrix source swapped.
pub fn solve_vnmpc(
    model: &crate::analytic::AnalyticVelocityModel,
    state: &ControllerState,
    x_k: &DVector<f64>,
    y_prev: &DVector<f64>,
    cfg: &ControllerConfig,
    ti: &TerminalIngredients,
) -> Result<StepSolution, ControllerError> {
    solve_step(model, state, x_k, y_prev, cfg, ti)
}

/// One receding-horizon update: solves the step problem, applies
/// `u_k = u_{k-1} + Δu*_0` and rolls the controller state forward.
pub fn control_update<S: VelocityMatrixSource>(
    source: &S,
    state: &ControllerState,
    x_k: &DVector<f64>,
    y_prev: &DVector<f64>,
    y_r: f64,
    cfg: &ControllerConfig,
    ti: &TerminalIngredients,
) -> Result<(DVector<f64>, SolveReport, ControllerState), ControllerError> {
    if ti.y_r != y_r {
        return Err(ControllerError::ReferenceMismatch {
            have: ti.y_r,
            want: y_r,
        });
    }
    let solution = solve_step(source, state, x_k, y_prev, cfg, ti)?;
    let next = ControllerState {
        u_prev: solution.u.clone(),
        x_prev: Some(x_k.clone()),
        y_prev: Some(y_prev.clone()),
        warm_schedule: Some(solution.schedule.clone()),
    };
    Ok((solution.u, solution.report, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::solve_dare;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    /// Constant scalar velocity source: nz = 2 with the usual structure, but
    /// the gradient entries are fixed numbers.
    struct ScalarLti {
        a: f64,
        b: f64,
        h: f64,
    }

    impl VelocityMatrixSource for ScalarLti {
        fn dims(&self) -> ModelDims {
            ModelDims { n: 1, m: 1, p: 1 }
        }
        fn velocity_matrices(
            &self,
            _x: &DVector<f64>,
            _u: &DVector<f64>,
        ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
            (
                dmatrix![1.0, self.h; 0.0, self.a],
                dmatrix![0.0; self.b],
                dmatrix![1.0, self.h],
            )
        }
    }

    fn loose_config(horizon: usize) -> ControllerConfig {
        ControllerConfig {
            horizon,
            q: DMatrix::identity(2, 2),
            r: dmatrix![1.0],
            eps: 1e-8,
            max_sqp_iters: 30,
            z_set: Polytope::box_nd(2, 1e6),
            du_set: Polytope::box_nd(1, 1e6),
            terminal_slack_weight: 0.0,
            qp_tol: 1e-11,
        }
    }

    fn lti_terminal(src: &ScalarLti, cfg: &ControllerConfig, y_r: f64) -> TerminalIngredients {
        let (a_hat, b_hat, _) = src.velocity_matrices(&dvector![0.0], &dvector![0.0]);
        let sol = solve_dare(&a_hat, &b_hat, &cfg.q, &cfg.r).unwrap();
        let a_cl = &a_hat + &b_hat * &sol.k_gain;
        TerminalIngredients {
            y_r,
            r: dvector![y_r, 0.0],
            weight: sol.p,
            gain: sol.k_gain,
            set: Polytope::box_nd(2, 1e6),
            a_cl,
        }
    }

    #[test]
    fn warm_start_shift_drops_and_duplicates() {
        let mk = |v: f64| SchedulePoint {
            x: dvector![v],
            u: dvector![10.0 * v],
        };
        let seq = ScheduleSequence::new(vec![mk(1.0), mk(2.0), mk(3.0)]);
        let shifted = shift_warm_start(&seq);
        assert_eq!(shifted.points()[0], mk(2.0));
        assert_eq!(shifted.points()[1], mk(3.0));
        assert_eq!(shifted.points()[2], mk(3.0));

        let single = ScheduleSequence::new(vec![mk(4.0)]);
        assert_eq!(shift_warm_start(&single), single);

        let constant = ScheduleSequence::constant(&dvector![0.5], &dvector![0.1], 3);
        assert_eq!(shift_warm_start(&constant), constant);
    }

    #[test]
    fn one_step_unconstrained_matches_lqr_algebra() {
        let src = ScalarLti {
            a: 0.9,
            b: 0.5,
            h: 1.0,
        };
        let cfg = loose_config(1);
        let ti = lti_terminal(&src, &cfg, 0.0);
        let z0 = dvector![0.7, -0.3];
        let schedule = ScheduleSequence::constant(&dvector![0.0], &dvector![0.0], 1);
        let pm = build_prediction_matrices(&src, schedule.points()).unwrap();
        let condensed = condense_qp(&pm, &z0, &cfg, &ti).unwrap();
        let sol = solve_qp(&condensed.problem, 1e-11);
        assert_eq!(sol.status, QpStatus::Optimal);

        // du* = -(B'PB + R)^-1 B'P(A z0 - r) with r = 0.
        let (a_hat, b_hat, _) = src.velocity_matrices(&dvector![0.0], &dvector![0.0]);
        let denom = (b_hat.transpose() * &ti.weight * &b_hat)[(0, 0)] + cfg.r[(0, 0)];
        let numer = (b_hat.transpose() * &ti.weight * (&a_hat * &z0))[(0, 0)];
        assert_relative_eq!(sol.v[0], -numer / denom, max_relative = 1e-6);
    }

    #[test]
    fn at_reference_the_increment_vanishes() {
        let src = ScalarLti {
            a: 0.9,
            b: 0.5,
            h: 1.0,
        };
        let cfg = loose_config(5);
        let y_r = 0.4;
        let ti = lti_terminal(&src, &cfg, y_r);
        // z0 = r exactly: previous output on target, zero increment.
        let state = ControllerState {
            u_prev: dvector![0.08],
            x_prev: Some(dvector![0.2]),
            y_prev: None,
            warm_schedule: None,
        };
        let sol = solve_step(
            &src,
            &state,
            &dvector![0.2],
            &dvector![y_r],
            &cfg,
            &ti,
        )
        .unwrap();
        assert!(sol.du_stack.amax() <= 1e-7, "du {:?}", sol.du_stack);
        assert_relative_eq!(sol.u[0], 0.08, epsilon = 1e-7);
    }

    #[test]
    fn zero_state_weight_gives_zero_increments() {
        // With Q̄ = 0 and R̄ = I the QP minimizes pure input effort.
        let src = ScalarLti {
            a: 0.9,
            b: 0.5,
            h: 1.0,
        };
        let mut cfg = loose_config(4);
        cfg.q = DMatrix::zeros(2, 2);
        cfg.r = dmatrix![1.0];
        let mut ti = lti_terminal(&src, &loose_config(4), 0.0);
        ti.weight = DMatrix::zeros(2, 2);
        let schedule = ScheduleSequence::constant(&dvector![0.3], &dvector![0.1], 4);
        let pm = build_prediction_matrices(&src, schedule.points()).unwrap();
        let z0 = dvector![1.3, -0.4];
        let condensed = condense_qp(&pm, &z0, &cfg, &ti).unwrap();
        let sol = solve_qp(&condensed.problem, 1e-11);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(sol.v.amax() <= 1e-9);
    }

    #[test]
    fn lti_schedule_converges_in_two_iterations() {
        // Constant matrices: the second iteration reproduces the first
        // schedule exactly.
        let src = ScalarLti {
            a: 0.9,
            b: 0.5,
            h: 1.0,
        };
        let cfg = loose_config(8);
        let ti = lti_terminal(&src, &cfg, 0.3);
        let state = ControllerState::new(1);
        let sol = solve_step(
            &src,
            &state,
            &dvector![0.0],
            &dvector![0.0],
            &cfg,
            &ti,
        )
        .unwrap();
        assert!(sol.report.converged);
        assert!(sol.report.sqp_iterations <= 2, "iters {}", sol.report.sqp_iterations);
    }

    #[test]
    fn infinite_tolerance_stops_after_one_iteration() {
        let src = ScalarLti {
            a: 0.9,
            b: 0.5,
            h: 1.0,
        };
        let mut cfg = loose_config(5);
        cfg.eps = f64::INFINITY;
        let ti = lti_terminal(&src, &loose_config(5), 0.2);
        let state = ControllerState::new(1);
        let sol = solve_step(&src, &state, &dvector![0.4], &dvector![0.1], &cfg, &ti).unwrap();
        assert_eq!(sol.report.sqp_iterations, 1);
        assert!(sol.report.converged);
    }

    #[test]
    fn predicted_stack_matches_resimulation_at_convergence() {
        let src = ScalarLti {
            a: 0.85,
            b: 0.4,
            h: 1.0,
        };
        let cfg = loose_config(6);
        let ti = lti_terminal(&src, &cfg, 0.5);
        let state = ControllerState::new(1);
        let sol = solve_step(&src, &state, &dvector![0.1], &dvector![-0.2], &cfg, &ti).unwrap();
        assert!(sol.report.converged);

        // Re-simulate with the returned increments from the measured state.
        let z0 = dvector![-0.2, 0.0];
        let mut z = z0.clone();
        for j in 0..6 {
            let du = dvector![sol.du_stack[j]];
            let (a_hat, b_hat, _) = src.velocity_matrices(&dvector![0.0], &dvector![0.0]);
            z = &a_hat * &z + &b_hat * du;
            let block = sol.predicted_z.rows(j * 2, 2);
            assert!((&z - block.clone_owned()).norm() <= 1e-9);
        }
    }

    #[test]
    fn increment_constraints_bind() {
        let src = ScalarLti {
            a: 0.9,
            b: 0.5,
            h: 1.0,
        };
        let mut cfg = loose_config(3);
        cfg.du_set = Polytope::box_nd(1, 0.05);
        let ti = lti_terminal(&src, &loose_config(3), 1.5);
        let state = ControllerState::new(1);
        let sol = solve_step(&src, &state, &dvector![0.0], &dvector![0.0], &cfg, &ti).unwrap();
        for j in 0..3 {
            assert!(sol.du_stack[j].abs() <= 0.05 + 1e-8);
        }
        // Large reference error: the first increment saturates.
        assert_relative_eq!(sol.du_stack[0].abs(), 0.05, epsilon = 1e-6);
    }

    #[test]
    fn predicted_stack_respects_the_state_set() {
        let src = ScalarLti {
            a: 0.95,
            b: 0.5,
            h: 1.0,
        };
        let mut cfg = loose_config(6);
        cfg.z_set = Polytope::box_nd(2, 0.3);
        let mut ti = lti_terminal(&src, &cfg, 0.6);
        ti.set = Polytope::box_nd(2, 10.0);
        // Reference outside the state box: tracking saturates against Z and
        // every predicted stage stays admissible.
        let state = ControllerState::new(1);
        let sol = solve_step(&src, &state, &dvector![0.0], &dvector![0.0], &cfg, &ti).unwrap();
        for j in 0..6 {
            let z = sol.predicted_z.rows(j * 2, 2).into_owned();
            assert!(
                cfg.z_set.max_violation(&z) <= 1e-8,
                "stage {j} violates Z by {:.3e}",
                cfg.z_set.max_violation(&z)
            );
            let du = dvector![sol.du_stack[j]];
            assert!(cfg.du_set.max_violation(&du) <= 1e-8);
        }
    }

    #[test]
    fn infeasible_hard_terminal_reports_error() {
        let src = ScalarLti {
            a: 0.9,
            b: 0.5,
            h: 1.0,
        };
        let mut cfg = loose_config(2);
        cfg.du_set = Polytope::box_nd(1, 1e-4);
        let mut ti = lti_terminal(&src, &loose_config(2), 1.0);
        // Tiny terminal set far out of reach under the increment bound.
        ti.set = Polytope::box_nd(2, 1e-6);
        let state = ControllerState::new(1);
        let err = solve_step(&src, &state, &dvector![0.0], &dvector![0.0], &cfg, &ti);
        assert!(matches!(err, Err(ControllerError::QpInfeasible { .. })));

        // Softening turns the same problem feasible and reports the slack.
        cfg.terminal_slack_weight = 1e6;
        let sol = solve_step(&src, &state, &dvector![0.0], &dvector![0.0], &cfg, &ti).unwrap();
        assert!(sol.report.terminal_slack > 0.0);
    }

    #[test]
    fn kernel_and_analytic_sources_agree_on_an_exactly_fit_lti() {
        // Fit the kernel model on scalar LTI data, then solve the same step
        // problem through both matrix sources from a state inside the data
        // coverage.
        use crate::kernel::{KernelFamily, KernelSpec};
        use crate::model::{build_regressors, fit_velocity_model, subsample_centers};
        use crate::plant::Dataset;

        let mut x = vec![DVector::from_vec(vec![0.5])];
        let mut u = Vec::new();
        let mut y = Vec::new();
        let mut d = Vec::new();
        // Dense pseudo-random excitation so the kernel interpolant is smooth
        // across the whole operating range.
        let mut rng = 0x1234_5678u64;
        let inputs: Vec<f64> = (0..60)
            .map(|_| {
                rng ^= rng << 13;
                rng ^= rng >> 7;
                rng ^= rng << 17;
                (rng >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect();
        let mut state = 0.5;
        for &uk in &inputs {
            u.push(DVector::from_vec(vec![uk]));
            y.push(DVector::from_vec(vec![state]));
            d.push(DVector::from_vec(vec![0.0]));
            state = 0.9 * state + 0.5 * uk;
            x.push(DVector::from_vec(vec![state]));
        }
        u.push(u.last().unwrap().clone());
        y.push(DVector::from_vec(vec![state]));
        d.push(DVector::from_vec(vec![0.0]));
        let data = Dataset { x, u, y, d };

        let kernel = KernelSpec::new(KernelFamily::InverseMultiquadric, 1.0).unwrap();
        let (cxu, cx) = subsample_centers(&data, 1).unwrap();
        let bundle = build_regressors(&data, &kernel, &cxu, &cx).unwrap();
        let (model, report) = fit_velocity_model(&bundle, 0.0).unwrap();
        assert!(report.residual_x <= 1e-8, "residual {}", report.residual_x);

        let analytic = ScalarLti {
            a: 0.9,
            b: 0.5,
            h: 1.0,
        };
        let cfg = loose_config(6);
        let y_r = 0.3;
        let ti_a = lti_terminal(&analytic, &cfg, y_r);
        // Same weights for the kernel side, its own frozen-point matrices.
        let x_r = dvector![0.3];
        let u_r = dvector![0.3 * 0.1 / 0.5];
        let (ak, bk, _) = model.velocity_matrices(&x_r, &u_r);
        let sol_dare = solve_dare(&ak, &bk, &cfg.q, &cfg.r).unwrap();
        let ti_k = TerminalIngredients {
            y_r,
            r: dvector![y_r, 0.0],
            weight: sol_dare.p,
            gain: sol_dare.k_gain.clone(),
            set: Polytope::box_nd(2, 1e6),
            a_cl: &ak + &bk * &sol_dare.k_gain,
        };

        let state = ControllerState {
            u_prev: dvector![0.2],
            x_prev: Some(dvector![0.45]),
            y_prev: None,
            warm_schedule: None,
        };
        let x_k = dvector![0.5];
        let y_prev = dvector![0.45];
        let sol_a = solve_step(&analytic, &state, &x_k, &y_prev, &cfg, &ti_a).unwrap();
        let sol_k = solve_step(&model, &state, &x_k, &y_prev, &cfg, &ti_k).unwrap();
        assert!(sol_a.report.converged && sol_k.report.converged);
        let gap = (&sol_a.du_stack - &sol_k.du_stack).amax();
        assert!(gap <= 1e-3, "increment stacks diverge by {gap:.3e}");
        assert!((sol_a.u[0] - sol_k.u[0]).abs() <= 1e-3);
    }

    #[test]
    fn reference_mismatch_is_rejected() {
        let src = ScalarLti {
            a: 0.9,
            b: 0.5,
            h: 1.0,
        };
        let cfg = loose_config(2);
        let ti = lti_terminal(&src, &cfg, 0.25);
        let state = ControllerState::new(1);
        let err = control_update(
            &src,
            &state,
            &dvector![0.0],
            &dvector![0.0],
            0.5,
            &cfg,
            &ti,
        );
        assert!(matches!(err, Err(ControllerError::ReferenceMismatch { .. })));
    }
}
