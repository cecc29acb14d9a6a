//! Dense two-phase simplex for the small linear programs arising in polytope
//! algebra (redundancy removal, support functions, inclusion tests).
//!
//! Solves `min cᵀx` subject to `A_in x ≤ b_in`, `A_eq x = b_eq` over free
//! variables. Free variables are split into positive parts internally; Bland's
//! rule rules out cycling, so the solver is deterministic and always
//! terminates.

use nalgebra::{DMatrix, DVector};

use super::OptimError;

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Minimizer, meaningful only when `status == Optimal`.
    pub x: DVector<f64>,
    /// Optimal value `cᵀx`, meaningful only when `status == Optimal`.
    pub value: f64,
}

pub fn solve_lp(
    c: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
) -> Result<LpSolution, OptimError> {
    let n = c.len();
    if a_in.ncols() != n && a_in.nrows() > 0 {
        return Err(OptimError::DimensionMismatch(format!(
            "A_in has {} columns, expected {n}",
            a_in.ncols()
        )));
    }
    if a_eq.ncols() != n && a_eq.nrows() > 0 {
        return Err(OptimError::DimensionMismatch(format!(
            "A_eq has {} columns, expected {n}",
            a_eq.ncols()
        )));
    }
    if a_in.nrows() != b_in.len() || a_eq.nrows() != b_eq.len() {
        return Err(OptimError::DimensionMismatch(
            "constraint row counts do not match right-hand sides".into(),
        ));
    }

    let m_in = a_in.nrows();
    let m_eq = a_eq.nrows();
    let rows = m_in + m_eq;

    // Standard form: x = xp - xm with xp, xm >= 0, slacks on inequalities.
    // Column layout: [xp (n) | xm (n) | slack (m_in) | artificial (rows)].
    let n_struct = 2 * n + m_in;
    let total = n_struct + rows;

    let mut tab = DMatrix::<f64>::zeros(rows, total + 1);
    for i in 0..m_in {
        for j in 0..n {
            tab[(i, j)] = a_in[(i, j)];
            tab[(i, n + j)] = -a_in[(i, j)];
        }
        tab[(i, 2 * n + i)] = 1.0;
        tab[(i, total)] = b_in[i];
    }
    for i in 0..m_eq {
        let r = m_in + i;
        for j in 0..n {
            tab[(r, j)] = a_eq[(i, j)];
            tab[(r, n + j)] = -a_eq[(i, j)];
        }
        tab[(r, total)] = b_eq[i];
    }
    // Nonnegative right-hand sides for phase 1.
    for i in 0..rows {
        if tab[(i, total)] < 0.0 {
            for j in 0..=total {
                tab[(i, j)] = -tab[(i, j)];
            }
        }
        tab[(i, n_struct + i)] = 1.0;
    }

    let mut basis: Vec<usize> = (0..rows).map(|i| n_struct + i).collect();

    // Phase 1: minimize the artificial sum.
    let mut cost1 = DVector::<f64>::zeros(total);
    for j in n_struct..total {
        cost1[j] = 1.0;
    }
    let phase1 = run_simplex(&mut tab, &mut basis, &cost1, total, total);
    if phase1 == SimplexOutcome::Unbounded {
        // The artificial sum is bounded below by zero; cannot happen.
        return Err(OptimError::DimensionMismatch(
            "phase-1 simplex reported unbounded".into(),
        ));
    }
    let phase1_value: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &j)| j >= n_struct)
        .map(|(i, _)| tab[(i, total)])
        .sum();
    if phase1_value > FEAS_TOL {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: DVector::zeros(n),
            value: f64::NAN,
        });
    }
    // Pivot any artificial still basic (at zero) out, or mark its row inert.
    for i in 0..rows {
        if basis[i] >= n_struct {
            if let Some(j) = (0..n_struct).find(|&j| tab[(i, j)].abs() > PIVOT_TOL) {
                pivot(&mut tab, &mut basis, i, j, total);
            }
        }
    }

    // Phase 2 on the structural columns only.
    let mut cost2 = DVector::<f64>::zeros(total);
    for j in 0..n {
        cost2[j] = c[j];
        cost2[n + j] = -c[j];
    }
    let phase2 = run_simplex(&mut tab, &mut basis, &cost2, n_struct, total);
    if phase2 == SimplexOutcome::Unbounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: DVector::zeros(n),
            value: f64::NEG_INFINITY,
        });
    }

    let mut x = DVector::<f64>::zeros(n);
    for (i, &j) in basis.iter().enumerate() {
        let v = tab[(i, total)];
        if j < n {
            x[j] += v;
        } else if j < 2 * n {
            x[j - n] -= v;
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        value: c.dot(&x),
        x,
    })
}

#[derive(Debug, PartialEq, Eq)]
enum SimplexOutcome {
    Optimal,
    Unbounded,
}

/// Bland-rule simplex on the tableau; only columns `< allowed` may enter.
fn run_simplex(
    tab: &mut DMatrix<f64>,
    basis: &mut [usize],
    cost: &DVector<f64>,
    allowed: usize,
    total: usize,
) -> SimplexOutcome {
    let rows = tab.nrows();
    loop {
        // Reduced costs under the current basis: r_j = c_j - c_Bᵀ B⁻¹ A_j.
        // The tableau already stores B⁻¹ A, so accumulate against basic costs.
        let mut entering = None;
        for j in 0..allowed {
            if basis.contains(&j) {
                continue;
            }
            let mut reduced = cost[j];
            for i in 0..rows {
                reduced -= cost[basis[i]] * tab[(i, j)];
            }
            if reduced < -PIVOT_TOL {
                entering = Some(j);
                break; // Bland: smallest index.
            }
        }
        let Some(j_in) = entering else {
            return SimplexOutcome::Optimal;
        };

        let mut leaving: Option<(usize, f64)> = None;
        for i in 0..rows {
            let a_ij = tab[(i, j_in)];
            if a_ij > PIVOT_TOL {
                let ratio = tab[(i, total)] / a_ij;
                match leaving {
                    None => leaving = Some((i, ratio)),
                    Some((best_i, best)) => {
                        // Bland tie-break: smallest basis index.
                        if ratio < best - 1e-12
                            || (ratio <= best + 1e-12 && basis[i] < basis[best_i])
                        {
                            leaving = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((i_out, _)) = leaving else {
            return SimplexOutcome::Unbounded;
        };
        pivot(tab, basis, i_out, j_in, total);
    }
}

fn pivot(tab: &mut DMatrix<f64>, basis: &mut [usize], row: usize, col: usize, total: usize) {
    let p = tab[(row, col)];
    for j in 0..=total {
        tab[(row, j)] /= p;
    }
    for i in 0..tab.nrows() {
        if i != row {
            let factor = tab[(i, col)];
            if factor != 0.0 {
                for j in 0..=total {
                    tab[(i, j)] -= factor * tab[(row, j)];
                }
            }
        }
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn empty_eq() -> (DMatrix<f64>, DVector<f64>) {
        (DMatrix::zeros(0, 0), DVector::zeros(0))
    }

    #[test]
    fn maximize_over_unit_box() {
        // max v1 == min -v1 over |v| <= 1 in 2D.
        let (a_eq, b_eq) = empty_eq();
        let a_in = dmatrix![1.0, 0.0; -1.0, 0.0; 0.0, 1.0; 0.0, -1.0];
        let b_in = dvector![1.0, 1.0, 1.0, 1.0];
        let sol = solve_lp(&dvector![-1.0, 0.0], &a_in, &b_in, &a_eq, &b_eq).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.value + 1.0).abs() < 1e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        // v <= -1 and -v <= -1 cannot both hold.
        let (a_eq, b_eq) = empty_eq();
        let sol = solve_lp(
            &dvector![1.0],
            &dmatrix![1.0; -1.0],
            &dvector![-1.0, -1.0],
            &a_eq,
            &b_eq,
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let (a_eq, b_eq) = empty_eq();
        let sol = solve_lp(
            &dvector![1.0],
            &dmatrix![1.0],
            &dvector![1.0],
            &a_eq,
            &b_eq,
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_constrained() {
        // min v1 + v2 with v1 + v2 = 1, v >= -10 elementwise: any point on the
        // segment is optimal with value 1.
        let sol = solve_lp(
            &dvector![1.0, 1.0],
            &dmatrix![-1.0, 0.0; 0.0, -1.0],
            &dvector![10.0, 10.0],
            &dmatrix![1.0, 1.0],
            &dvector![1.0],
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.value - 1.0).abs() < 1e-9);
        assert!((sol.x[0] + sol.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        // Bounded polytopes: unit box plus random cutting rows; the oracle
        // enumerates basic feasible points from every row pair.
        let mut seed = 0x2545f491u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let (a_eq, b_eq) = empty_eq();
        for _ in 0..25 {
            let mut rows = vec![
                [1.0, 0.0, 1.0],
                [-1.0, 0.0, 1.0],
                [0.0, 1.0, 1.0],
                [0.0, -1.0, 1.0],
            ];
            for _ in 0..3 {
                rows.push([next(), next(), next().abs() + 0.2]);
            }
            let m = rows.len();
            let a_in = DMatrix::from_fn(m, 2, |i, j| rows[i][j]);
            let b_in = DVector::from_fn(m, |i, _| rows[i][2]);
            let c = dvector![next(), next()];

            let sol = solve_lp(&c, &a_in, &b_in, &a_eq, &b_eq).unwrap();

            // Oracle: intersect every pair of active rows, keep feasible, take
            // the best objective.
            let mut best = f64::INFINITY;
            for i in 0..m {
                for j in (i + 1)..m {
                    let det = a_in[(i, 0)] * a_in[(j, 1)] - a_in[(i, 1)] * a_in[(j, 0)];
                    if det.abs() < 1e-10 {
                        continue;
                    }
                    let x0 = (b_in[i] * a_in[(j, 1)] - a_in[(i, 1)] * b_in[j]) / det;
                    let x1 = (a_in[(i, 0)] * b_in[j] - b_in[i] * a_in[(j, 0)]) / det;
                    let feasible = (0..m)
                        .all(|r| a_in[(r, 0)] * x0 + a_in[(r, 1)] * x1 <= b_in[r] + 1e-9);
                    if feasible {
                        best = best.min(c[0] * x0 + c[1] * x1);
                    }
                }
            }
            assert_eq!(sol.status, LpStatus::Optimal);
            assert!(
                (sol.value - best).abs() < 1e-8,
                "simplex {} vs oracle {}",
                sol.value,
                best
            );
        }
    }
}
