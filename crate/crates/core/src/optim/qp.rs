//! Dense convex QP solver: primal-dual interior point with Mehrotra
//! predictor-corrector steps.
//!
//! Solves `min ½ vᵀHv + fᵀv` subject to `A_in v ≤ b_in`, `A_eq v = b_eq` for
//! symmetric positive semidefinite `H`. The condensed predictive-control
//! problems solved here are small and dense, so each Newton step factors the
//! reduced KKT system directly.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

type Directions = (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>);

use super::{symmetric_min_eig, OptimError};

const MAX_ITERS: usize = 80;
const STALL_STEP: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub v: DVector<f64>,
    pub status: QpStatus,
    /// Worst of stationarity, primal feasibility and complementarity.
    pub kkt_residual: f64,
    pub iterations: usize,
    /// `½ vᵀHv + fᵀv` at the returned point.
    pub objective: f64,
}

/// A convex QP. The cost matrix is symmetrized on construction and rejected
/// if its smallest eigenvalue falls below `-1e-8`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        h: DMatrix<f64>,
        f: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
    ) -> Result<Self, OptimError> {
        let n = f.len();
        if h.shape() != (n, n) {
            return Err(OptimError::DimensionMismatch(format!(
                "H is {:?}, expected {n}x{n}",
                h.shape()
            )));
        }
        if (a_in.nrows() > 0 && a_in.ncols() != n) || a_in.nrows() != b_in.len() {
            return Err(OptimError::DimensionMismatch(
                "inequality block shapes are inconsistent".into(),
            ));
        }
        if (a_eq.nrows() > 0 && a_eq.ncols() != n) || a_eq.nrows() != b_eq.len() {
            return Err(OptimError::DimensionMismatch(
                "equality block shapes are inconsistent".into(),
            ));
        }
        let h = (&h + h.transpose()) * 0.5;
        let min_eig = symmetric_min_eig(&h);
        if min_eig < -1e-8 {
            return Err(OptimError::IndefiniteCost(min_eig));
        }
        Ok(Self {
            h,
            f,
            a_in,
            b_in,
            a_eq,
            b_eq,
        })
    }

    pub fn with_inequalities(
        h: DMatrix<f64>,
        f: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Result<Self, OptimError> {
        let n = f.len();
        Self::new(h, f, a_in, b_in, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn num_vars(&self) -> usize {
        self.f.len()
    }

    fn objective(&self, v: &DVector<f64>) -> f64 {
        0.5 * (v.transpose() * &self.h * v)[(0, 0)] + self.f.dot(v)
    }

    /// Largest violation over all constraints at `v` (0 when feasible).
    fn primal_violation(&self, v: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        if self.a_in.nrows() > 0 {
            let slack = &self.a_in * v - &self.b_in;
            worst = worst.max(slack.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
        if self.a_eq.nrows() > 0 {
            let gap = &self.a_eq * v - &self.b_eq;
            worst = worst.max(gap.iter().map(|g| g.abs()).fold(0.0, f64::max));
        }
        worst.max(0.0)
    }

    /// Worst violation scaled per row by `1 + |b_i|`, the quantity used to
    /// classify infeasibility independently of loose constraint rows.
    fn relative_violation(&self, v: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        if self.a_in.nrows() > 0 {
            let slack = &self.a_in * v - &self.b_in;
            for i in 0..slack.len() {
                worst = worst.max(slack[i] / (1.0 + self.b_in[i].abs()));
            }
        }
        if self.a_eq.nrows() > 0 {
            let gap = &self.a_eq * v - &self.b_eq;
            for i in 0..gap.len() {
                worst = worst.max(gap[i].abs() / (1.0 + self.b_eq[i].abs()));
            }
        }
        worst
    }
}

pub fn solve_qp(p: &QpProblem, tol: f64) -> QpSolution {
    let mi = p.a_in.nrows();
    let me = p.a_eq.nrows();
    if mi == 0 {
        return solve_equality_qp(p, tol);
    }

    let n = p.num_vars();
    let scale = 1.0
        + p.f.amax().max(if mi > 0 { p.b_in.amax() } else { 0.0 }).max(if me > 0 {
            p.b_eq.amax()
        } else {
            0.0
        });

    // Start from the min-norm equality-consistent point with unit slacks.
    let mut v = if me > 0 {
        let rhs = DMatrix::from_row_slice(1, me, p.b_eq.as_slice());
        super::min_norm_lstsq(&p.a_eq.transpose(), &rhs)
            .map(|s| s.x.transpose().column(0).into_owned())
            .unwrap_or_else(|_| DVector::zeros(n))
    } else {
        DVector::zeros(n)
    };
    let mut s = DVector::<f64>::from_fn(mi, |i, _| {
        let gap = p.b_in[i] - p.a_in.row(i).transpose().dot(&v);
        gap.abs().max(1.0)
    });
    let mut lam = DVector::<f64>::from_element(mi, 1.0);
    let mut nu = DVector::<f64>::zeros(me);

    let mut iterations = 0;
    let mut status = QpStatus::MaxIters;

    for iter in 1..=MAX_ITERS {
        iterations = iter;

        let r_d = &p.h * &v + &p.f + p.a_in.transpose() * &lam
            + if me > 0 {
                p.a_eq.transpose() * &nu
            } else {
                DVector::zeros(n)
            };
        let r_p = &p.a_in * &v + &s - &p.b_in;
        let r_e = if me > 0 {
            &p.a_eq * &v - &p.b_eq
        } else {
            DVector::zeros(0)
        };
        let mu = s.dot(&lam) / mi as f64;

        let conv = r_d.amax() <= tol * scale
            && r_p.amax() <= tol * scale
            && (me == 0 || r_e.amax() <= tol * scale)
            && mu <= tol * scale;
        if conv {
            status = QpStatus::Optimal;
            break;
        }
        if !v.iter().all(|x| x.is_finite()) || lam.amax() > 1e14 {
            break;
        }

        // Reduced KKT matrix, shared by predictor and corrector.
        let w = DVector::from_fn(mi, |i, _| lam[i] / s[i]);
        let mut reduced = p.h.clone();
        for i in 0..mi {
            let row = p.a_in.row(i);
            for a in 0..n {
                let wa = w[i] * row[a];
                if wa != 0.0 {
                    for b in 0..n {
                        reduced[(a, b)] += wa * row[b];
                    }
                }
            }
        }
        let dim = n + me;
        let mut aug = DMatrix::<f64>::zeros(dim, dim);
        aug.view_mut((0, 0), (n, n)).copy_from(&reduced);
        if me > 0 {
            aug.view_mut((0, n), (n, me)).copy_from(&p.a_eq.transpose());
            aug.view_mut((n, 0), (me, n)).copy_from(&p.a_eq);
        }

        let mut lu = aug.clone().full_piv_lu();
        let solve_dirs = |lu: &nalgebra::FullPivLU<f64, nalgebra::Dyn, nalgebra::Dyn>,
                          r_c: &DVector<f64>|
         -> Option<Directions> {
            let mut rhs = DVector::<f64>::zeros(dim);
            let correction = DVector::from_fn(mi, |i, _| (r_c[i] - lam[i] * r_p[i]) / s[i]);
            let top = -&r_d + p.a_in.transpose() * correction;
            rhs.rows_mut(0, n).copy_from(&top);
            if me > 0 {
                rhs.rows_mut(n, me).copy_from(&(-&r_e));
            }
            let sol = lu.solve(&rhs)?;
            let dv = sol.rows(0, n).into_owned();
            let dnu = sol.rows(n, me).into_owned();
            let ds = -&r_p - &p.a_in * &dv;
            let dlam = DVector::from_fn(mi, |i, _| -(r_c[i] + lam[i] * ds[i]) / s[i]);
            Some((dv, dnu, ds, dlam))
        };

        // Retry with diagonal regularization if the KKT system is singular.
        let mut dirs = solve_dirs(&lu, &DVector::from_fn(mi, |i, _| s[i] * lam[i]));
        if dirs.is_none() {
            let mut reg = 1e-12 * scale;
            while dirs.is_none() && reg <= 1e-6 * scale {
                let mut bumped = aug.clone();
                for i in 0..n {
                    bumped[(i, i)] += reg;
                }
                for i in n..dim {
                    bumped[(i, i)] -= reg;
                }
                lu = bumped.full_piv_lu();
                dirs = solve_dirs(&lu, &DVector::from_fn(mi, |i, _| s[i] * lam[i]));
                reg *= 100.0;
            }
        }
        let Some((_dv_a, _dnu_a, ds_a, dlam_a)) = dirs else {
            break;
        };

        let alpha_p_aff = max_step(&s, &ds_a);
        let alpha_d_aff = max_step(&lam, &dlam_a);
        let mu_aff = (0..mi)
            .map(|i| (s[i] + alpha_p_aff * ds_a[i]) * (lam[i] + alpha_d_aff * dlam_a[i]))
            .sum::<f64>()
            / mi as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let r_c = DVector::from_fn(mi, |i, _| {
            s[i] * lam[i] - sigma * mu + ds_a[i] * dlam_a[i]
        });
        let Some((dv, dnu, ds, dlam)) = solve_dirs(&lu, &r_c) else {
            break;
        };

        let eta = 0.99_f64.max(1.0 - mu);
        let alpha_p = (eta * max_step(&s, &ds)).min(1.0);
        let alpha_d = (eta * max_step(&lam, &dlam)).min(1.0);
        if alpha_p < STALL_STEP && alpha_d < STALL_STEP {
            break;
        }

        v += alpha_p * &dv;
        s += alpha_p * &ds;
        lam += alpha_d * &dlam;
        if me > 0 {
            nu += alpha_d * &dnu;
        }
    }

    let violation = p.primal_violation(&v);
    if status != QpStatus::Optimal && p.relative_violation(&v) > 1e-6_f64.max(10.0 * tol) {
        status = QpStatus::Infeasible;
    }

    let r_d = &p.h * &v + &p.f + p.a_in.transpose() * &lam
        + if me > 0 {
            p.a_eq.transpose() * &nu
        } else {
            DVector::zeros(p.num_vars())
        };
    let compl = (0..mi).map(|i| (s[i] * lam[i]).abs()).fold(0.0, f64::max);
    let kkt_residual = r_d.amax().max(violation).max(compl);

    QpSolution {
        objective: p.objective(&v),
        v,
        status,
        kkt_residual,
        iterations,
    }
}

/// Largest `alpha` in (0, 1] keeping `x + alpha dx` nonnegative.
fn max_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    let mut alpha = 1.0_f64;
    for i in 0..x.len() {
        if dx[i] < 0.0 {
            alpha = alpha.min(-x[i] / dx[i]);
        }
    }
    alpha
}

/// Direct KKT solve for problems without inequality constraints.
fn solve_equality_qp(p: &QpProblem, tol: f64) -> QpSolution {
    let n = p.num_vars();
    let me = p.a_eq.nrows();
    let dim = n + me;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
    if me > 0 {
        kkt.view_mut((0, n), (n, me)).copy_from(&p.a_eq.transpose());
        kkt.view_mut((n, 0), (me, n)).copy_from(&p.a_eq);
    }
    let mut rhs = DVector::<f64>::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&p.f));
    if me > 0 {
        rhs.rows_mut(n, me).copy_from(&p.b_eq);
    }

    // LU first; min-norm fallback covers singular KKT systems.
    let v = match kkt.clone().full_piv_lu().solve(&rhs) {
        Some(sol) => sol.rows(0, n).into_owned(),
        None => {
            let rhs_row = DMatrix::from_row_slice(1, dim, rhs.as_slice());
            let sol = super::min_norm_lstsq(&kkt.transpose(), &rhs_row)
                .map(|s| s.x.transpose())
                .unwrap_or_else(|_| DMatrix::zeros(dim, 1));
            sol.column(0).rows(0, n).into_owned()
        }
    };

    let scale = 1.0 + p.f.amax().max(if me > 0 { p.b_eq.amax() } else { 0.0 });
    let violation = p.primal_violation(&v);
    // Stationarity residual within the feasible subspace.
    let grad = &p.h * &v + &p.f;
    let stat = if me > 0 {
        // Stationarity within the feasible subspace: pick the min-norm
        // multipliers mapping -grad into the row space of A_eq.
        let grad_row = DMatrix::from_row_slice(1, n, grad.as_slice());
        match super::min_norm_lstsq(&p.a_eq, &grad_row) {
            Ok(s) => (&grad - p.a_eq.transpose() * s.x.transpose().column(0)).amax(),
            Err(_) => grad.amax(),
        }
    } else {
        grad.amax()
    };
    let kkt_residual = stat.max(violation);
    let status = if kkt_residual <= tol * scale {
        QpStatus::Optimal
    } else if p.relative_violation(&v) > 1e-6_f64.max(10.0 * tol) {
        QpStatus::Infeasible
    } else {
        QpStatus::MaxIters
    };
    QpSolution {
        objective: p.objective(&v),
        v,
        status,
        kkt_residual,
        iterations: 1,
    }
}
