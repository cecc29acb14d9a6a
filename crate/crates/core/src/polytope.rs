//! Halfspace polytopes `{v : A v ≤ b}` with the LP-backed algebra used to
//! build invariant terminal sets: redundancy removal, inclusion tests,
//! pre-images under linear maps and vertex enumeration in up to three
//! dimensions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{solve_lp, solve_qp, LpStatus, OptimError, QpProblem, QpStatus};

const ZERO_ROW_TOL: f64 = 1e-12;
const REDUNDANCY_TOL: f64 = 1e-9;
const VERTEX_FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum PolytopeError {
    #[error("polytope is empty")]
    Empty,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operation requires a bounded polytope")]
    Unbounded,
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("vertex enumeration supports dimensions 1..=3, got {0}")]
    UnsupportedDimension(usize),
}

/// A polytope in halfspace form. Rows produced by [`Polytope::new`] and
/// [`Polytope::reduce`] are normalized to unit norm; raw constructors keep
/// rows as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Polytope {
    /// Validated constructor: normalizes rows and certifies nonemptiness with
    /// an interior-point LP.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, PolytopeError> {
        let mut poly = Self::from_rows_unchecked(a, b);
        poly.normalize()?;
        if poly.chebyshev_radius()? < 0.0 {
            return Err(PolytopeError::Empty);
        }
        Ok(poly)
    }

    /// Raw constructor for internally derived sets; no normalization or
    /// emptiness check.
    pub fn from_rows_unchecked(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        assert_eq!(a.nrows(), b.len(), "halfspace rows and offsets disagree");
        Self { a, b }
    }

    /// The box `{v : |v_i| ≤ bound}`.
    pub fn box_nd(dim: usize, bound: f64) -> Self {
        let mut a = DMatrix::<f64>::zeros(2 * dim, dim);
        for i in 0..dim {
            a[(2 * i, i)] = 1.0;
            a[(2 * i + 1, i)] = -1.0;
        }
        Self {
            a,
            b: DVector::from_element(2 * dim, bound),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn rows(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.a, &self.b)
    }

    /// Largest signed constraint value `max_i (a_i·v - b_i)`; nonpositive
    /// inside the set, and for unit rows the positive part bounds the
    /// distance to the set from below.
    pub fn max_violation(&self, v: &DVector<f64>) -> f64 {
        (&self.a * v - &self.b)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(v) <= tol
    }

    /// The set `{v : v + offset ∈ self}`.
    pub fn translate(&self, offset: &DVector<f64>) -> Self {
        Self {
            a: self.a.clone(),
            b: &self.b - &self.a * offset,
        }
    }

    /// Halfspace intersection by row concatenation (no reduction).
    pub fn intersect(&self, other: &Polytope) -> Result<Self, PolytopeError> {
        if self.dim() != other.dim() {
            return Err(PolytopeError::DimensionMismatch(format!(
                "{} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let rows = self.num_rows() + other.num_rows();
        let mut a = DMatrix::<f64>::zeros(rows, self.dim());
        a.view_mut((0, 0), (self.num_rows(), self.dim())).copy_from(&self.a);
        a.view_mut((self.num_rows(), 0), (other.num_rows(), self.dim()))
            .copy_from(&other.a);
        let mut b = DVector::<f64>::zeros(rows);
        b.rows_mut(0, self.num_rows()).copy_from(&self.b);
        b.rows_mut(self.num_rows(), other.num_rows()).copy_from(&other.b);
        Ok(Self { a, b })
    }

    /// Pre-image under a linear map: `{v : map·v ∈ self}`, returned as the
    /// raw rows `A·map ≤ b`.
    pub fn pre_image(&self, map: &DMatrix<f64>) -> Result<Self, PolytopeError> {
        if map.nrows() != self.dim() {
            return Err(PolytopeError::DimensionMismatch(format!(
                "map has {} rows, polytope lives in dimension {}",
                map.nrows(),
                self.dim()
            )));
        }
        Ok(Self {
            a: &self.a * map,
            b: self.b.clone(),
        })
    }

    /// In-place row normalization. Vacuous zero rows are dropped; a zero row
    /// with negative offset proves emptiness.
    fn normalize(&mut self) -> Result<(), PolytopeError> {
        let mut rows = Vec::new();
        let mut offs = Vec::new();
        for i in 0..self.num_rows() {
            let norm = self.a.row(i).norm();
            if norm <= ZERO_ROW_TOL {
                if self.b[i] < -ZERO_ROW_TOL {
                    return Err(PolytopeError::Empty);
                }
                continue;
            }
            rows.push(self.a.row(i) / norm);
            offs.push(self.b[i] / norm);
        }
        let dim = self.dim();
        self.a = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        self.b = DVector::from_vec(offs);
        Ok(())
    }

    /// Chebyshev radius: the largest ball around some center inside the set.
    /// Negative means empty, `+inf` means the LP is unbounded (the set has
    /// arbitrarily large balls).
    pub fn chebyshev_radius(&self) -> Result<f64, PolytopeError> {
        if self.num_rows() == 0 {
            return Ok(f64::INFINITY);
        }
        let dim = self.dim();
        // Variables (c, r): maximize r subject to a_i·c + ||a_i|| r <= b_i.
        let mut a_in = DMatrix::<f64>::zeros(self.num_rows(), dim + 1);
        for i in 0..self.num_rows() {
            for j in 0..dim {
                a_in[(i, j)] = self.a[(i, j)];
            }
            a_in[(i, dim)] = self.a.row(i).norm();
        }
        let mut c = DVector::<f64>::zeros(dim + 1);
        c[dim] = -1.0;
        let sol = solve_lp(&c, &a_in, &self.b, &DMatrix::zeros(0, dim + 1), &DVector::zeros(0))?;
        match sol.status {
            LpStatus::Optimal => Ok(sol.x[dim]),
            LpStatus::Unbounded => Ok(f64::INFINITY),
            LpStatus::Infeasible => Ok(f64::NEG_INFINITY),
        }
    }

    /// Support value `max a·v` over the set; `None` when unbounded in that
    /// direction.
    pub fn support(&self, direction: &DVector<f64>) -> Result<Option<f64>, PolytopeError> {
        let sol = solve_lp(
            &(-direction),
            &self.a,
            &self.b,
            &DMatrix::zeros(0, self.dim()),
            &DVector::zeros(0),
        )?;
        match sol.status {
            LpStatus::Optimal => Ok(Some(-sol.value)),
            LpStatus::Unbounded => Ok(None),
            LpStatus::Infeasible => Err(PolytopeError::Empty),
        }
    }

    /// Whether `other ⊆ self` up to `tol`, certified by one support LP per
    /// row of `self`.
    pub fn includes(&self, other: &Polytope, tol: f64) -> Result<bool, PolytopeError> {
        for i in 0..self.num_rows() {
            let dir = self.a.row(i).transpose();
            match other.support(&dir)? {
                Some(value) => {
                    if value > self.b[i] + tol {
                        return Ok(false);
                    }
                }
                None => return Ok(false),
            }
        }
        Ok(true)
    }

    /// Minimal representation: normalized, deduplicated, non-redundant rows
    /// sorted lexicographically. Errors when the set is empty.
    pub fn reduce(&self) -> Result<Self, PolytopeError> {
        let mut poly = self.clone();
        poly.normalize()?;
        if poly.chebyshev_radius()? < 0.0 {
            return Err(PolytopeError::Empty);
        }

        // Near-duplicate rows: same normal, keep the tighter offset.
        let mut keep: Vec<(DVector<f64>, f64)> = Vec::new();
        'rows: for i in 0..poly.num_rows() {
            let ai = poly.a.row(i).transpose();
            for (aj, bj) in keep.iter_mut() {
                if (&ai - &*aj).amax() <= 1e-12 {
                    *bj = bj.min(poly.b[i]);
                    continue 'rows;
                }
            }
            keep.push((ai, poly.b[i]));
        }

        // Drop rows whose halfspace is implied by the others.
        let mut active: Vec<bool> = vec![true; keep.len()];
        for i in 0..keep.len() {
            let others: Vec<usize> = (0..keep.len())
                .filter(|&j| j != i && active[j])
                .collect();
            if others.is_empty() {
                continue;
            }
            let a_in = DMatrix::from_fn(others.len(), poly.dim(), |r, c| keep[others[r]].0[c]);
            let b_in = DVector::from_fn(others.len(), |r, _| keep[others[r]].1);
            let sol = solve_lp(
                &(-keep[i].0.clone()),
                &a_in,
                &b_in,
                &DMatrix::zeros(0, poly.dim()),
                &DVector::zeros(0),
            )?;
            match sol.status {
                LpStatus::Optimal if -sol.value <= keep[i].1 + REDUNDANCY_TOL => {
                    active[i] = false;
                }
                LpStatus::Infeasible => return Err(PolytopeError::Empty),
                _ => {}
            }
        }

        let mut rows: Vec<(Vec<f64>, f64)> = keep
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|((a, b), _)| (a.as_slice().to_vec(), *b))
            .collect();
        rows.sort_by(|(a1, b1), (a2, b2)| {
            a1.iter()
                .zip(a2.iter())
                .map(|(x, y)| x.partial_cmp(y).unwrap())
                .find(|o| o.is_ne())
                .unwrap_or_else(|| b1.partial_cmp(b2).unwrap())
        });

        let dim = poly.dim();
        Ok(Self {
            a: DMatrix::from_fn(rows.len(), dim, |i, j| rows[i].0[j]),
            b: DVector::from_fn(rows.len(), |i, _| rows[i].1),
        })
    }

    /// Vertices by facet-combination enumeration, supported for dimensions up
    /// to three. The list is deduplicated and sorted lexicographically.
    pub fn vertices(&self) -> Result<Vec<DVector<f64>>, PolytopeError> {
        let d = self.dim();
        if d == 0 || d > 3 {
            return Err(PolytopeError::UnsupportedDimension(d));
        }
        let m = self.num_rows();
        let mut verts: Vec<DVector<f64>> = Vec::new();
        let mut combo = vec![0usize; d];
        enumerate_combinations(m, d, &mut combo, 0, 0, &mut |sel| {
            let sub = DMatrix::from_fn(d, d, |r, c| self.a[(sel[r], c)]);
            let rhs = DVector::from_fn(d, |r, _| self.b[sel[r]]);
            if let Some(v) = sub.full_piv_lu().solve(&rhs) {
                if v.iter().all(|x| x.is_finite())
                    && self.max_violation(&v) <= VERTEX_FEAS_TOL
                    && !verts.iter().any(|w| (w - &v).norm() <= 1e-8)
                {
                    verts.push(v);
                }
            }
        });
        verts.sort_by(|p, q| {
            p.iter()
                .zip(q.iter())
                .map(|(x, y)| x.partial_cmp(y).unwrap())
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(verts)
    }

    /// Euclidean distance from a point to the set (zero inside), via a small
    /// projection QP.
    pub fn distance_to(&self, point: &DVector<f64>) -> Result<f64, PolytopeError> {
        if self.contains(point, 0.0) {
            return Ok(0.0);
        }
        let dim = self.dim();
        let qp = QpProblem::with_inequalities(
            DMatrix::identity(dim, dim),
            -point.clone(),
            self.a.clone(),
            self.b.clone(),
        )?;
        let sol = solve_qp(&qp, 1e-10);
        if sol.status != QpStatus::Optimal {
            return Err(PolytopeError::Empty);
        }
        Ok((sol.v - point).norm())
    }

    /// Deterministic boundary points along pseudo-random directions scaled
    /// from the origin, which must lie in the interior.
    pub fn sample_boundary(&self, count: usize) -> Result<Vec<DVector<f64>>, PolytopeError> {
        let dim = self.dim();
        let mut state = 0x5eed_cafe_f00du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let mut points = Vec::with_capacity(count);
        let mut guard = 0;
        while points.len() < count && guard < 100 * count + 100 {
            guard += 1;
            let dir = DVector::from_fn(dim, |_, _| next());
            let norm = dir.norm();
            if norm < 1e-6 {
                continue;
            }
            let dir = dir / norm;
            let mut t = f64::INFINITY;
            for i in 0..self.num_rows() {
                let denom = self.a.row(i).transpose().dot(&dir);
                if denom > 1e-12 {
                    t = t.min(self.b[i] / denom);
                }
            }
            if t.is_finite() && t > 0.0 {
                points.push(dir * t);
            }
        }
        Ok(points)
    }
}

fn enumerate_combinations(
    m: usize,
    d: usize,
    combo: &mut Vec<usize>,
    depth: usize,
    start: usize,
    f: &mut impl FnMut(&[usize]),
) {
    if depth == d {
        f(combo);
        return;
    }
    for i in start..m {
        combo[depth] = i;
        enumerate_combinations(m, d, combo, depth + 1, i + 1, f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn unit_box(dim: usize) -> Polytope {
        Polytope::box_nd(dim, 1.0)
    }

    #[test]
    fn membership_and_violation() {
        let p = unit_box(2);
        assert!(p.contains(&dvector![0.0, 0.0], 0.0));
        assert!(p.contains(&dvector![1.0, -1.0], 1e-12));
        assert!(!p.contains(&dvector![1.1, 0.0], 1e-9));
        assert!((p.max_violation(&dvector![1.5, 0.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_polytope_rejected() {
        let err = Polytope::new(dmatrix![1.0; -1.0], dvector![-1.0, -1.0]);
        assert!(matches!(err, Err(PolytopeError::Empty)));
    }

    #[test]
    fn pre_image_scales_boxes() {
        let p = unit_box(2);
        let pre = p
            .pre_image(&DMatrix::identity(2, 2).scale(0.5))
            .unwrap()
            .reduce()
            .unwrap();
        // {v : 0.5 v in box} is the box scaled by 2.
        for v in [dvector![2.0, 2.0], dvector![-2.0, 1.9]] {
            assert!(pre.contains(&v, 1e-9));
        }
        assert!(!pre.contains(&dvector![2.01, 0.0], 1e-9));

        let identity_pre = p.pre_image(&DMatrix::identity(2, 2)).unwrap();
        assert!(identity_pre.includes(&p, 1e-9).unwrap());
        assert!(p.includes(&identity_pre, 1e-9).unwrap());
    }

    #[test]
    fn pre_image_of_zero_map_is_full_space_for_nonnegative_offsets() {
        let p = unit_box(2);
        let pre = p.pre_image(&DMatrix::zeros(2, 2)).unwrap();
        // All rows vanish with b >= 0: every point satisfies them.
        for v in [dvector![1e9, -1e9], dvector![0.0, 0.0]] {
            assert!(pre.contains(&v, 0.0));
        }
    }

    #[test]
    fn reduce_removes_duplicates_and_slack_rows() {
        // Unit box with a duplicated face and a slack row v1 <= 5.
        let a = dmatrix![
            1.0, 0.0;
            1.0, 0.0;
            -1.0, 0.0;
            0.0, 1.0;
            0.0, -1.0;
            1.0, 0.0
        ];
        let b = dvector![1.0, 1.0, 1.0, 1.0, 1.0, 5.0];
        let poly = Polytope::from_rows_unchecked(a, b);
        let red = poly.reduce().unwrap();
        assert_eq!(red.num_rows(), 4);
        let cube = unit_box(2);
        assert!(red.includes(&cube, 1e-9).unwrap());
        assert!(cube.includes(&red, 1e-9).unwrap());
    }

    #[test]
    fn reduction_is_deterministic_and_sorted() {
        let a = dmatrix![0.0, 1.0; 1.0, 0.0; -1.0, 0.0; 0.0, -1.0];
        let b = dvector![1.0, 1.0, 1.0, 1.0];
        let poly = Polytope::from_rows_unchecked(a, b);
        let r1 = poly.reduce().unwrap();
        let r2 = poly.reduce().unwrap();
        assert_eq!(r1, r2);
        // Lexicographic row order.
        let (ra, _) = r1.rows();
        for i in 1..ra.nrows() {
            let prev: Vec<f64> = ra.row(i - 1).iter().cloned().collect();
            let cur: Vec<f64> = ra.row(i).iter().cloned().collect();
            assert!(prev <= cur);
        }
    }

    #[test]
    fn vertices_of_the_unit_square() {
        let verts = unit_box(2).vertices().unwrap();
        assert_eq!(verts.len(), 4);
        for v in &verts {
            assert!((v[0].abs() - 1.0).abs() < 1e-9);
            assert!((v[1].abs() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn reduction_preserves_vertices_on_random_2d_polytopes() {
        let mut seed = 0xfeedbeefu64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..15 {
            // Random rows around the unit box keep the set bounded and
            // nonempty (origin stays feasible).
            let extra = 4;
            let mut rows = vec![
                (dvector![1.0, 0.0], 1.0),
                (dvector![-1.0, 0.0], 1.0),
                (dvector![0.0, 1.0], 1.0),
                (dvector![0.0, -1.0], 1.0),
            ];
            for _ in 0..extra {
                rows.push((dvector![next(), next()], next().abs() + 0.1));
            }
            let a = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i].0[j]);
            let b = DVector::from_fn(rows.len(), |i, _| rows[i].1);
            let poly = Polytope::from_rows_unchecked(a, b);
            let red = poly.reduce().unwrap();

            let mut v1 = poly.vertices().unwrap();
            let mut v2 = red.vertices().unwrap();
            assert_eq!(v1.len(), v2.len());
            v1.sort_by(|p, q| p[0].partial_cmp(&q[0]).unwrap());
            v2.sort_by(|p, q| p[0].partial_cmp(&q[0]).unwrap());
            for (p, q) in v1.iter().zip(&v2) {
                assert!((p - q).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn support_and_chebyshev() {
        let p = unit_box(2);
        assert!((p.support(&dvector![1.0, 0.0]).unwrap().unwrap() - 1.0).abs() < 1e-9);
        assert!((p.support(&dvector![1.0, 1.0]).unwrap().unwrap() - 2.0).abs() < 1e-9);
        assert!((p.chebyshev_radius().unwrap() - 1.0).abs() < 1e-9);

        let halfplane = Polytope::from_rows_unchecked(dmatrix![1.0, 0.0], dvector![0.0]);
        assert!(halfplane.support(&dvector![0.0, 1.0]).unwrap().is_none());
    }

    #[test]
    fn distance_to_outside_points() {
        let p = unit_box(2);
        assert_eq!(p.distance_to(&dvector![0.2, -0.7]).unwrap(), 0.0);
        assert!((p.distance_to(&dvector![2.0, 0.0]).unwrap() - 1.0).abs() < 1e-6);
        assert!((p.distance_to(&dvector![2.0, 2.0]).unwrap() - std::f64::consts::SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn boundary_samples_lie_on_the_boundary() {
        let p = unit_box(3);
        let pts = p.sample_boundary(25).unwrap();
        assert_eq!(pts.len(), 25);
        for v in pts {
            let viol = p.max_violation(&v);
            assert!(viol.abs() <= 1e-9, "violation {viol}");
        }
    }
}
