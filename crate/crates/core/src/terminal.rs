//! Per-reference terminal ingredients: weight `P`, gain `K` and a polytopic
//! terminal set `Z_T`, together with runtime certificate checks.
//!
//! The pair `(P, K)` comes from the discrete Riccati equation at the frozen
//! reference point, where the terminal Lyapunov inequality
//! `(Â+B̂K)ᵀP(Â+B̂K) - P ⪯ -Q - KᵀRK` holds with equality. `Z_T` is the
//! maximal positively invariant subset of the admissible region under the
//! closed-loop map, computed by intersecting with pre-sets until a fixed
//! point.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::VelocityMatrixSource;
use crate::optim::{solve_dare, symmetric_max_eig, OptimError};
use crate::polytope::{Polytope, PolytopeError};

const INVARIANCE_CAP: usize = 100;
const INCLUSION_TOL: f64 = 1e-9;
const CERT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TerminalError {
    #[error("terminal synthesis failed at reference {y_r}: {source}")]
    Synthesis {
        y_r: f64,
        #[source]
        source: OptimError,
    },
    #[error("admissible initial set is empty")]
    EmptyInitialSet,
    #[error("invariant-set iteration hit the cap of {cap} without converging")]
    InvariantSetCap { cap: usize, last: Box<Polytope> },
    #[error("terminal set does not contain the origin in its interior (margin {0})")]
    OriginNotInterior(f64),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("terminal set io: {0}")]
    Io(#[from] std::io::Error),
}

/// Terminal ingredients for one output reference, with `Z_T` expressed in
/// `z - r` coordinates.
#[derive(Debug, Clone)]
pub struct TerminalIngredients {
    pub y_r: f64,
    /// `r = col(y_r, 0)` in the extended-state space.
    pub r: DVector<f64>,
    pub weight: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub set: Polytope,
    pub a_cl: DMatrix<f64>,
}

/// `r = col(y_r, 0_n)` for a single-output model.
pub fn reference_vector(y_r: f64, nz: usize) -> DVector<f64> {
    let mut r = DVector::zeros(nz);
    r[0] = y_r;
    r
}

/// Terminal weight and gain from the Riccati equation at the frozen
/// reference matrices; the certificate inequality then holds with equality.
pub fn compute_terminal_cost_gain(
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y_r: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), TerminalError> {
    let sol = solve_dare(a_hat, b_hat, q, r).map_err(|source| TerminalError::Synthesis {
        y_r,
        source,
    })?;
    Ok((sol.p, sol.k_gain))
}

/// Pre-set of a polytope under the closed-loop map: `{v : A_cl v ∈ set}`.
pub fn polytope_pre(a_cl: &DMatrix<f64>, set: &Polytope) -> Result<Polytope, PolytopeError> {
    set.pre_image(a_cl)
}

/// Minimal halfspace representation (delegates to [`Polytope::reduce`]).
pub fn polytope_reduce(set: &Polytope) -> Result<Polytope, PolytopeError> {
    set.reduce()
}

/// Maximal positively invariant set of `v+ = A_cl v` inside
/// `Ω₀ = admissible ∩ {v : gain·v ∈ du_set}`. Iterates
/// `Ω_{i+1} = Ω_i ∩ pre(Ω_i)` to a fixed point certified by mutual LP
/// inclusion.
pub fn max_invariant_set(
    a_cl: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    admissible: &Polytope,
    du_set: &Polytope,
) -> Result<Polytope, TerminalError> {
    let gain_rows = du_set.pre_image(gain)?;
    let omega0 = admissible.intersect(&gain_rows)?;
    let mut omega = omega0.reduce().map_err(|e| match e {
        PolytopeError::Empty => TerminalError::EmptyInitialSet,
        other => TerminalError::Polytope(other),
    })?;

    for _ in 0..INVARIANCE_CAP {
        let pre = omega.pre_image(a_cl)?;
        let next = omega.intersect(&pre)?.reduce().map_err(|e| match e {
            PolytopeError::Empty => TerminalError::EmptyInitialSet,
            other => TerminalError::Polytope(other),
        })?;
        // Shrinking is automatic; equality needs the reverse inclusion.
        if next.includes(&omega, INCLUSION_TOL)? {
            return Ok(next);
        }
        omega = next;
    }
    Err(TerminalError::InvariantSetCap {
        cap: INVARIANCE_CAP,
        last: Box::new(omega),
    })
}

/// Builds the full ingredient triple for one reference from any velocity
/// matrix source. `z_set` is in absolute `z` coordinates and is shifted by
/// `r` internally; `du_set` constrains input increments.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_terminal<S: VelocityMatrixSource>(
    source: &S,
    x_r: &DVector<f64>,
    u_r: &DVector<f64>,
    y_r: f64,
    q: &DMatrix<f64>,
    r_weight: &DMatrix<f64>,
    z_set: &Polytope,
    du_set: &Polytope,
) -> Result<TerminalIngredients, TerminalError> {
    let dims = source.dims();
    if dims.p != 1 {
        return Err(TerminalError::DimensionMismatch(
            "terminal synthesis assumes a single output reference".into(),
        ));
    }
    let (a_hat, b_hat, _) = source.velocity_matrices(x_r, u_r);
    let (weight, gain) = compute_terminal_cost_gain(&a_hat, &b_hat, q, r_weight, y_r)?;
    let a_cl = &a_hat + &b_hat * &gain;

    let r = reference_vector(y_r, dims.nz());
    let shifted = z_set.translate(&r);
    let set = max_invariant_set(&a_cl, &gain, &shifted, du_set)?;

    let origin_margin = set.max_violation(&DVector::zeros(dims.nz()));
    if origin_margin >= 0.0 {
        return Err(TerminalError::OriginNotInterior(origin_margin));
    }

    Ok(TerminalIngredients {
        y_r,
        r,
        weight,
        gain,
        set,
        a_cl,
    })
}

/// Outcome of the runtime certificate checks: worst slacks per condition and
/// the list of violations with witness points.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    /// `λ_max((Â+B̂K)ᵀP(Â+B̂K) - P + Q + KᵀRK)`.
    pub lyapunov_slack: f64,
    /// Worst `max_violation` of `A_cl v` against `Z_T` over checked points.
    pub invariance_slack: f64,
    /// Worst violation of `gain·v ∈ ΔU`.
    pub gain_slack: f64,
    /// Worst violation of `v + r ∈ Z`.
    pub inclusion_slack: f64,
    pub points_checked: usize,
    pub failures: Vec<String>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Verifies the terminal conditions at the frozen reference matrices, the
/// vertices of `Z_T` and `sample_count` extra boundary points.
pub fn check_terminal_certificates(
    ti: &TerminalIngredients,
    q: &DMatrix<f64>,
    r_weight: &DMatrix<f64>,
    z_set: &Polytope,
    du_set: &Polytope,
    sample_count: usize,
) -> Result<CertificateReport, TerminalError> {
    let mut failures = Vec::new();

    let lyap = ti.a_cl.transpose() * &ti.weight * &ti.a_cl - &ti.weight
        + q
        + ti.gain.transpose() * r_weight * &ti.gain;
    let lyapunov_slack = symmetric_max_eig(&lyap).unwrap_or(f64::NAN);
    if lyapunov_slack.is_nan() || lyapunov_slack > CERT_TOL {
        failures.push(format!(
            "Lyapunov inequality violated: max eigenvalue {lyapunov_slack:.3e}"
        ));
    }

    let mut points = ti.set.vertices()?;
    points.extend(ti.set.sample_boundary(sample_count)?);

    let shifted_z = z_set.translate(&ti.r);
    let mut invariance_slack = f64::NEG_INFINITY;
    let mut gain_slack = f64::NEG_INFINITY;
    let mut inclusion_slack = f64::NEG_INFINITY;
    for v in &points {
        let image = &ti.a_cl * v;
        let inv = ti.set.max_violation(&image);
        if inv > invariance_slack {
            invariance_slack = inv;
        }
        if inv > CERT_TOL {
            failures.push(format!(
                "invariance violated at witness {:?}: image slack {inv:.3e}",
                v.as_slice()
            ));
        }

        let du = &ti.gain * v;
        let gv = du_set.max_violation(&du);
        if gv > gain_slack {
            gain_slack = gv;
        }
        if gv > CERT_TOL {
            failures.push(format!(
                "gain admissibility violated at witness {:?}: slack {gv:.3e}",
                v.as_slice()
            ));
        }

        let iv = shifted_z.max_violation(v);
        if iv > inclusion_slack {
            inclusion_slack = iv;
        }
        if iv > CERT_TOL {
            failures.push(format!(
                "state-set inclusion violated at witness {:?}: slack {iv:.3e}",
                v.as_slice()
            ));
        }
    }

    Ok(CertificateReport {
        lyapunov_slack,
        invariance_slack,
        gain_slack,
        inclusion_slack,
        points_checked: points.len(),
        failures,
    })
}

/// Worst Lyapunov-condition slack of the ingredients over arbitrary
/// scheduling points: `λ_max((Â+B̂K)ᵀP(Â+B̂K) - P + Q + KᵀRK)` maximized over
/// the given `(x, u)` pairs. The frozen-point construction guarantees the
/// condition only at the reference; sampling it along closed-loop schedules
/// turns that gap into a measured diagnostic.
pub fn scheduled_lyapunov_slack<'a, S, I>(
    source: &S,
    ti: &TerminalIngredients,
    q: &DMatrix<f64>,
    r_weight: &DMatrix<f64>,
    points: I,
) -> f64
where
    S: VelocityMatrixSource,
    I: IntoIterator<Item = (&'a DVector<f64>, &'a DVector<f64>)>,
{
    let mut worst = f64::NEG_INFINITY;
    for (x, u) in points {
        let (a_hat, b_hat, _) = source.velocity_matrices(x, u);
        let a_cl = &a_hat + &b_hat * &ti.gain;
        let lyap = a_cl.transpose() * &ti.weight * &a_cl - &ti.weight
            + q
            + ti.gain.transpose() * r_weight * &ti.gain;
        if let Some(top) = symmetric_max_eig(&lyap) {
            worst = worst.max(top);
        }
    }
    worst
}

impl TerminalIngredients {
    /// Halfspace CSV `a1,...,ad,b` of the terminal set.
    pub fn write_halfspace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let (a, b) = self.set.rows();
        let dim = a.ncols();
        let header: Vec<String> = (1..=dim).map(|i| format!("a{i}")).collect();
        writeln!(w, "{},b", header.join(","))?;
        for i in 0..a.nrows() {
            let row: Vec<String> = (0..dim).map(|j| format!("{:.16e}", a[(i, j)])).collect();
            writeln!(w, "{},{:.16e}", row.join(","), b[i])?;
        }
        Ok(())
    }

    /// Vertex CSV `v1,...,vd` of the terminal set.
    pub fn write_vertex_csv<W: Write>(&self, mut w: W) -> Result<(), TerminalError> {
        let verts = self.set.vertices()?;
        let dim = self.set.dim();
        let header: Vec<String> = (1..=dim).map(|i| format!("v{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for v in verts {
            let row: Vec<String> = (0..dim).map(|j| format!("{:.16e}", v[j])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, halfspaces: P, vertices: P) -> Result<(), TerminalError> {
        let f1 = std::fs::File::create(halfspaces)?;
        self.write_halfspace_csv(std::io::BufWriter::new(f1))?;
        let f2 = std::fs::File::create(vertices)?;
        self.write_vertex_csv(std::io::BufWriter::new(f2))?;
        Ok(())
    }
}
