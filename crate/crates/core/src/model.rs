//! Kernelized velocity-form model: regressor construction, least-squares fit,
//! model evaluation and multi-step prediction matrices.
//!
//! The extended state is `z = col(y_prev, Δx)`. The one-step map
//!
//! ```text
//! z+ = Â(x,u) z + B̂(x,u) Δu,    ŷ = Ĉ(x) z,
//! Â = [ I  C_α(I_n⊗K̄_x(x)) ]    B̂ = [        0         ]
//!     [ 0  A_α(I_n⊗K̄_xu)   ]        [ B_α(I_m⊗K̄_xu) ]
//! ```
//!
//! keeps the identity block exact; only the gradient blocks are learned. The
//! coefficients solve two separate least-squares problems pairing kernel
//! regressors with measured increments.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{kernel_vector_unchecked, CenterSet, KernelError, KernelSpec};
use crate::optim::{ridge_lstsq, OptimError};
use crate::plant::Dataset;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dataset too short: need at least {need} samples, got {got}")]
    TooShortDataset { need: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("schedule must contain at least one point")]
    EmptySchedule,
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
    #[error("model serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// State, input and output dimensions of a velocity model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

impl ModelDims {
    /// Dimension of the extended state `col(y_prev, Δx)`.
    pub fn nz(&self) -> usize {
        self.p + self.n
    }
}

/// The velocity-form state `z = col(y_prev, Δx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub y_prev: DVector<f64>,
    pub dx: DVector<f64>,
}

impl ExtendedState {
    pub fn new(y_prev: DVector<f64>, dx: DVector<f64>) -> Self {
        Self { y_prev, dx }
    }

    pub fn zeros(dims: &ModelDims) -> Self {
        Self {
            y_prev: DVector::zeros(dims.p),
            dx: DVector::zeros(dims.n),
        }
    }

    pub fn dim(&self) -> usize {
        self.y_prev.len() + self.dx.len()
    }

    pub fn as_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v.rows_mut(0, self.y_prev.len()).copy_from(&self.y_prev);
        v.rows_mut(self.y_prev.len(), self.dx.len()).copy_from(&self.dx);
        v
    }

    pub fn from_vector(v: &DVector<f64>, dims: &ModelDims) -> Result<Self, ModelError> {
        if v.len() != dims.nz() {
            return Err(ModelError::DimensionMismatch(format!(
                "extended state has length {}, expected {}",
                v.len(),
                dims.nz()
            )));
        }
        Ok(Self {
            y_prev: v.rows(0, dims.p).into_owned(),
            dx: v.rows(dims.p, dims.n).into_owned(),
        })
    }
}

/// One scheduling point `ρ = col(x̃, ũ)` at which the velocity matrices are
/// frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulePoint {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
}

/// `(Â, B̂, Ĉ)` evaluated at one scheduling point.
pub type VelocityMatrices = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

/// Anything able to produce velocity-form matrices at a scheduling point:
/// the learned kernel model or the analytic baseline.
pub trait VelocityMatrixSource {
    fn dims(&self) -> ModelDims;

    /// Returns `(Â, B̂, Ĉ)` at the scheduling point `(x, u)`.
    fn velocity_matrices(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);
}

/// Learned coefficient matrices plus everything needed to evaluate them.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityKernelModel {
    a_alpha: DMatrix<f64>,
    b_alpha: DMatrix<f64>,
    c_alpha: DMatrix<f64>,
    centers_xu: CenterSet,
    centers_x: CenterSet,
    kernel: KernelSpec,
    dims: ModelDims,
}

impl VelocityKernelModel {
    pub fn new(
        a_alpha: DMatrix<f64>,
        b_alpha: DMatrix<f64>,
        c_alpha: DMatrix<f64>,
        centers_xu: CenterSet,
        centers_x: CenterSet,
        kernel: KernelSpec,
        dims: ModelDims,
    ) -> Result<Self, ModelError> {
        let sc = centers_xu.len();
        if centers_x.len() != sc {
            return Err(ModelError::DimensionMismatch(format!(
                "center sets must have equal sizes, got {} and {}",
                sc,
                centers_x.len()
            )));
        }
        if centers_xu.dim() != dims.n + dims.m || centers_x.dim() != dims.n {
            return Err(ModelError::DimensionMismatch(
                "center dimensions do not match the model dimensions".into(),
            ));
        }
        if a_alpha.shape() != (dims.n, dims.n * sc)
            || b_alpha.shape() != (dims.n, dims.m * sc)
            || c_alpha.shape() != (dims.p, dims.n * sc)
        {
            return Err(ModelError::DimensionMismatch(
                "coefficient matrix shapes do not match dims and center count".into(),
            ));
        }
        Ok(Self {
            a_alpha,
            b_alpha,
            c_alpha,
            centers_xu,
            centers_x,
            kernel,
            dims,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn num_centers(&self) -> usize {
        self.centers_xu.len()
    }

    pub fn coefficients(&self) -> (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>) {
        (&self.a_alpha, &self.b_alpha, &self.c_alpha)
    }

    fn kxu_at(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut point = Vec::with_capacity(self.dims.n + self.dims.m);
        point.extend_from_slice(x.as_slice());
        point.extend_from_slice(u.as_slice());
        kernel_vector_unchecked(&self.kernel, &self.centers_xu, &point)
    }

    fn kx_at(&self, x: &DVector<f64>) -> DVector<f64> {
        kernel_vector_unchecked(&self.kernel, &self.centers_x, x.as_slice())
    }

    /// Learned state gradient block `A_α (I_n ⊗ K̄_xu(x,u))`, an `n×n` matrix.
    pub fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        contract_kron(&self.a_alpha, &self.kxu_at(x, u), self.dims.n)
    }

    /// Learned input gradient block `B_α (I_m ⊗ K̄_xu(x,u))`, `n×m`.
    pub fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        contract_kron(&self.b_alpha, &self.kxu_at(x, u), self.dims.m)
    }

    /// Learned output gradient block `C_α (I_n ⊗ K̄_x(x))`, `p×n`.
    pub fn grad_h(&self, x: &DVector<f64>) -> DMatrix<f64> {
        contract_kron(&self.c_alpha, &self.kx_at(x), self.dims.n)
    }
}

/// Contracts `M (I_d ⊗ k)` without materializing the Kronecker product:
/// column `j` of the result is the `j`-th `len(k)`-column block of `M`
/// applied to `k`.
fn contract_kron(m: &DMatrix<f64>, k: &DVector<f64>, d: usize) -> DMatrix<f64> {
    let sc = k.len();
    debug_assert_eq!(m.ncols(), d * sc);
    let mut out = DMatrix::<f64>::zeros(m.nrows(), d);
    for j in 0..d {
        let block = m.columns(j * sc, sc);
        out.set_column(j, &(block * k));
    }
    out
}

impl VelocityMatrixSource for VelocityKernelModel {
    fn dims(&self) -> ModelDims {
        self.dims
    }

    fn velocity_matrices(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (n, m, p) = (self.dims.n, self.dims.m, self.dims.p);
        let nz = p + n;
        let gx = self.grad_x(x, u);
        let gu = self.grad_u(x, u);
        let gh = self.grad_h(x);

        let mut a_hat = DMatrix::<f64>::zeros(nz, nz);
        for i in 0..p {
            a_hat[(i, i)] = 1.0;
        }
        a_hat.view_mut((0, p), (p, n)).copy_from(&gh);
        a_hat.view_mut((p, p), (n, n)).copy_from(&gx);

        let mut b_hat = DMatrix::<f64>::zeros(nz, m);
        b_hat.view_mut((p, 0), (n, m)).copy_from(&gu);

        let mut c_hat = DMatrix::<f64>::zeros(p, nz);
        for i in 0..p {
            c_hat[(i, i)] = 1.0;
        }
        c_hat.view_mut((0, p), (p, n)).copy_from(&gh);

        (a_hat, b_hat, c_hat)
    }
}

/// `(Â, B̂, Ĉ)` of the kernel model at a scheduling point.
pub fn eval_model_matrices(
    model: &VelocityKernelModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<VelocityMatrices, ModelError> {
    if x.len() != model.dims.n || u.len() != model.dims.m {
        return Err(ModelError::DimensionMismatch(format!(
            "scheduling point has dims ({}, {}), model expects ({}, {})",
            x.len(),
            u.len(),
            model.dims.n,
            model.dims.m
        )));
    }
    Ok(model.velocity_matrices(x, u))
}

/// One velocity-model step: `z+ = Â(x,u) z + B̂(x,u) Δu` and the output
/// `ŷ = Ĉ(x) z` of the current step.
pub fn velocity_step(
    model: &VelocityKernelModel,
    z: &ExtendedState,
    x: &DVector<f64>,
    u: &DVector<f64>,
    du: &DVector<f64>,
) -> Result<(ExtendedState, DVector<f64>), ModelError> {
    let dims = model.dims;
    if z.y_prev.len() != dims.p || z.dx.len() != dims.n || du.len() != dims.m {
        return Err(ModelError::DimensionMismatch(
            "extended state or increment does not match model dims".into(),
        ));
    }
    let (a_hat, b_hat, c_hat) = eval_model_matrices(model, x, u)?;
    let zv = z.as_vector();
    let y_hat = &c_hat * &zv;
    let z_next = &a_hat * &zv + &b_hat * du;
    Ok((ExtendedState::from_vector(&z_next, &dims)?, y_hat))
}

/// Training regressors and increment targets. Column `k` (zero-based) pairs
/// the regressors built at sample `k+1` with the targets `Δx_{k+2}` and
/// `Δy_{k+1}`.
#[derive(Debug, Clone)]
pub struct RegressorBundle {
    pub kx_stack: DMatrix<f64>,
    pub ky_stack: DMatrix<f64>,
    pub dx_plus: DMatrix<f64>,
    pub dy_plus: DMatrix<f64>,
    pub kernel: KernelSpec,
    pub centers_xu: CenterSet,
    pub centers_x: CenterSet,
    pub dims: ModelDims,
}

/// Builds the stacked regressors over training pairs `k = 1 … s-1`.
pub fn build_regressors(
    data: &Dataset,
    kernel: &KernelSpec,
    centers_xu: &CenterSet,
    centers_x: &CenterSet,
) -> Result<RegressorBundle, ModelError> {
    let s = data.num_transitions();
    if s < 3 {
        return Err(ModelError::TooShortDataset { need: 3, got: s });
    }
    let dims = ModelDims {
        n: data.state_dim(),
        m: data.input_dim(),
        p: data.output_dim(),
    };
    if centers_xu.dim() != dims.n + dims.m {
        return Err(ModelError::DimensionMismatch(format!(
            "xu-centers have dimension {}, expected {}",
            centers_xu.dim(),
            dims.n + dims.m
        )));
    }
    if centers_x.dim() != dims.n {
        return Err(ModelError::DimensionMismatch(format!(
            "x-centers have dimension {}, expected {}",
            centers_x.dim(),
            dims.n
        )));
    }
    if centers_xu.len() != centers_x.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "center sets must have equal sizes, got {} and {}",
            centers_xu.len(),
            centers_x.len()
        )));
    }

    let sc = centers_xu.len();
    let cols = s - 1;
    let mut kx_stack = DMatrix::<f64>::zeros((dims.n + dims.m) * sc, cols);
    let mut ky_stack = DMatrix::<f64>::zeros(dims.n * sc, cols);
    let mut dx_plus = DMatrix::<f64>::zeros(dims.n, cols);
    let mut dy_plus = DMatrix::<f64>::zeros(dims.p, cols);

    let mut point = vec![0.0; dims.n + dims.m];
    for k in 1..s {
        let col = k - 1;
        let dx = data.delta_x(k);
        let du = data.delta_u(k);

        point[..dims.n].copy_from_slice(data.x[k].as_slice());
        point[dims.n..].copy_from_slice(data.u[k].as_slice());
        let kxu = kernel_vector_unchecked(kernel, centers_xu, &point);
        let kx = kernel_vector_unchecked(kernel, centers_x, data.x[k].as_slice());

        // col((I_n ⊗ K̄_xu)Δx, (I_m ⊗ K̄_xu)Δu): block i is the kernel vector
        // scaled by the i-th increment entry.
        for i in 0..dims.n {
            kx_stack
                .view_mut((i * sc, col), (sc, 1))
                .copy_from(&(&kxu * dx[i]));
        }
        for i in 0..dims.m {
            kx_stack
                .view_mut(((dims.n + i) * sc, col), (sc, 1))
                .copy_from(&(&kxu * du[i]));
        }
        for i in 0..dims.n {
            ky_stack
                .view_mut((i * sc, col), (sc, 1))
                .copy_from(&(&kx * dx[i]));
        }

        dx_plus.set_column(col, &data.delta_x(k + 1));
        dy_plus.set_column(col, &data.delta_y(k));
    }

    Ok(RegressorBundle {
        kx_stack,
        ky_stack,
        dx_plus,
        dy_plus,
        kernel: *kernel,
        centers_xu: centers_xu.clone(),
        centers_x: centers_x.clone(),
        dims,
    })
}

/// Subsamples centers on a uniform stride over the identification samples
/// `k = 1 … s`, dropping exact duplicates so the center-set invariants hold.
pub fn subsample_centers(
    data: &Dataset,
    stride: usize,
) -> Result<(CenterSet, CenterSet), ModelError> {
    let s = data.num_transitions();
    if stride == 0 {
        return Err(ModelError::DimensionMismatch(
            "center stride must be at least 1".into(),
        ));
    }
    let n = data.state_dim();
    let m = data.input_dim();
    let mut xu_points: Vec<Vec<f64>> = Vec::new();
    let mut x_points: Vec<Vec<f64>> = Vec::new();
    let mut k = 1;
    while k <= s {
        let mut xu = Vec::with_capacity(n + m);
        xu.extend_from_slice(data.x[k].as_slice());
        xu.extend_from_slice(data.u[k].as_slice());
        let x = data.x[k].as_slice().to_vec();
        if !xu_points.contains(&xu) && !x_points.contains(&x) {
            xu_points.push(xu);
            x_points.push(x);
        }
        k += stride;
    }
    let centers_xu = CenterSet::new(n + m, xu_points)?;
    let centers_x = CenterSet::new(n, x_points)?;
    Ok((centers_xu, centers_x))
}

/// Rank and residual diagnostics from the least-squares fit. Rank deficiency
/// is reported, never fatal: the min-norm solution is always defined.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub rank_x: usize,
    pub rank_y: usize,
    pub full_rank_x: bool,
    pub full_rank_y: bool,
    /// Frobenius training residuals of the state and output equations.
    pub residual_x: f64,
    pub residual_y: f64,
}

/// Fits `A_α`, `B_α`, `C_α` by (optionally ridge-regularized) min-norm least
/// squares on the two separated equation stacks.
pub fn fit_velocity_model(
    bundle: &RegressorBundle,
    ridge: f64,
) -> Result<(VelocityKernelModel, FitReport), ModelError> {
    let dims = bundle.dims;
    let sc = bundle.centers_xu.len();

    let ls_x = ridge_lstsq(&bundle.kx_stack, &bundle.dx_plus, ridge)?;
    let ls_y = ridge_lstsq(&bundle.ky_stack, &bundle.dy_plus, ridge)?;

    let ab = ls_x.x;
    let a_alpha = ab.columns(0, dims.n * sc).into_owned();
    let b_alpha = ab.columns(dims.n * sc, dims.m * sc).into_owned();
    let c_alpha = ls_y.x;

    let residual_x = (&ab * &bundle.kx_stack - &bundle.dx_plus).norm();
    let residual_y = (&c_alpha * &bundle.ky_stack - &bundle.dy_plus).norm();

    let report = FitReport {
        rank_x: ls_x.rank,
        rank_y: ls_y.rank,
        full_rank_x: ls_x.full_rank,
        full_rank_y: ls_y.full_rank,
        residual_x,
        residual_y,
    };
    let model = VelocityKernelModel::new(
        a_alpha,
        b_alpha,
        c_alpha,
        bundle.centers_xu.clone(),
        bundle.centers_x.clone(),
        bundle.kernel,
        dims,
    )?;
    Ok((model, report))
}

/// Stacked `N`-step prediction operators: `z_stack = Psi z0 + Gamma du_stack`
/// with block row `j` beginning at the product `Â(ρ_j) ⋯ Â(ρ_0)` (later
/// scheduling points multiply on the left, matching forward iteration).
#[derive(Debug, Clone)]
pub struct PredictionMatrices {
    pub psi: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub horizon: usize,
    pub nz: usize,
    pub m: usize,
}

pub fn build_prediction_matrices<S: VelocityMatrixSource>(
    source: &S,
    schedule: &[SchedulePoint],
) -> Result<PredictionMatrices, ModelError> {
    if schedule.is_empty() {
        return Err(ModelError::EmptySchedule);
    }
    let dims = source.dims();
    let nz = dims.nz();
    let m = dims.m;
    let n_steps = schedule.len();

    let mut psi = DMatrix::<f64>::zeros(n_steps * nz, nz);
    let mut gamma = DMatrix::<f64>::zeros(n_steps * nz, n_steps * m);

    // Row j holds A_j * (row j-1) and A_j * Gamma[j-1][i], with B_j on the
    // diagonal.
    let mut prev_psi = DMatrix::<f64>::identity(nz, nz);
    for (j, rho) in schedule.iter().enumerate() {
        let (a_hat, b_hat, _) = source.velocity_matrices(&rho.x, &rho.u);
        let row = &a_hat * &prev_psi;
        psi.view_mut((j * nz, 0), (nz, nz)).copy_from(&row);
        prev_psi = row;

        for i in 0..j {
            let above = gamma.view(((j - 1) * nz, i * m), (nz, m)).into_owned();
            gamma
                .view_mut((j * nz, i * m), (nz, m))
                .copy_from(&(&a_hat * above));
        }
        gamma.view_mut((j * nz, j * m), (nz, m)).copy_from(&b_hat);
    }

    Ok(PredictionMatrices {
        psi,
        gamma,
        horizon: n_steps,
        nz,
        m,
    })
}

/// Open-loop validation report: measured vs predicted outputs over
/// consecutive `N`-step windows, re-anchored at the measured state between
/// windows.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Sample indices covered by the rollouts.
    pub steps: Vec<usize>,
    pub y: Vec<DVector<f64>>,
    pub y_hat: Vec<DVector<f64>>,
    pub error: Vec<DVector<f64>>,
    pub rmse: f64,
}

impl ValidationReport {
    /// Writes the `k,y,y_hat,e` CSV (single-output models).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        writeln!(w, "k,y,y_hat,e")?;
        for (i, &k) in self.steps.iter().enumerate() {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e}",
                k, self.y[i][0], self.y_hat[i][0], self.error[i][0]
            )?;
        }
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), ModelError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Rolls the model `horizon` steps at a time along the dataset using measured
/// inputs, scheduling on model-simulated states after the first step of each
/// window.
pub fn validate_open_loop(
    model: &VelocityKernelModel,
    data: &Dataset,
    horizon: usize,
) -> Result<ValidationReport, ModelError> {
    let s = data.num_transitions();
    if horizon == 0 || s < horizon + 1 {
        return Err(ModelError::TooShortDataset {
            need: horizon + 2,
            got: s + 1,
        });
    }
    let mut steps = Vec::new();
    let mut ys = Vec::new();
    let mut y_hats = Vec::new();
    let mut errors = Vec::new();
    let mut sq_sum = 0.0;
    let mut count = 0usize;

    let mut start = 1;
    while start + horizon <= s + 1 {
        let mut x_hat = data.x[start].clone();
        let mut z = ExtendedState::new(data.y[start - 1].clone(), data.delta_x(start));
        for j in 0..horizon {
            let t = start + j;
            let u = data.u[t].clone();
            let du = data.delta_u(t);
            let (z_next, y_hat) = velocity_step(model, &z, &x_hat, &u, &du)?;
            let err = &data.y[t] - &y_hat;
            sq_sum += err.norm_squared();
            count += 1;
            steps.push(t);
            ys.push(data.y[t].clone());
            y_hats.push(y_hat);
            errors.push(err);
            x_hat += &z_next.dx;
            z = z_next;
        }
        start += horizon;
    }

    Ok(ValidationReport {
        steps,
        y: ys,
        y_hat: y_hats,
        error: errors,
        rmse: (sq_sum / count as f64).sqrt(),
    })
}

/// Serialization surface for the model file: row-major matrices plus center
/// sets and kernel spec.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    dims: ModelDims,
    kernel: KernelSpec,
    centers_xu: CenterSet,
    centers_x: CenterSet,
    #[serde(rename = "A_alpha")]
    a_alpha: MatrixData,
    #[serde(rename = "B_alpha")]
    b_alpha: MatrixData,
    #[serde(rename = "C_alpha")]
    c_alpha: MatrixData,
}

#[derive(Serialize, Deserialize)]
struct MatrixData {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixData {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    fn to_matrix(&self) -> Result<DMatrix<f64>, ModelError> {
        if self.data.len() != self.rows * self.cols {
            return Err(ModelError::DimensionMismatch(format!(
                "matrix data has {} entries for shape {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

impl VelocityKernelModel {
    pub fn to_json(&self) -> Result<String, ModelError> {
        let file = ModelFile {
            dims: self.dims,
            kernel: self.kernel,
            centers_xu: self.centers_xu.clone(),
            centers_x: self.centers_x.clone(),
            a_alpha: MatrixData::from_matrix(&self.a_alpha),
            b_alpha: MatrixData::from_matrix(&self.b_alpha),
            c_alpha: MatrixData::from_matrix(&self.c_alpha),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text)?;
        Self::new(
            file.a_alpha.to_matrix()?,
            file.b_alpha.to_matrix()?,
            file.c_alpha.to_matrix()?,
            file.centers_xu,
            file.centers_x,
            file.kernel,
            file.dims,
        )
    }

    pub fn save_json<P: AsRef<Path>>(&self, path: P) -> Result<(), ModelError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn load_json<P: AsRef<Path>>(path: P) -> Result<Self, ModelError> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        Self::from_json(&text)
    }
}
