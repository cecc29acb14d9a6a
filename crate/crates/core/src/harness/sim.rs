//! Closed-loop simulation of the plant against either controller variant,
//! plus the identification pipeline driven by a scenario.

use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::analytic::AnalyticVelocityModel;
use crate::controller::{control_update, ControllerState};
use crate::model::{
    build_regressors, fit_velocity_model, subsample_centers, FitReport, ModelDims,
    VelocityKernelModel, VelocityMatrixSource,
};
use crate::plant::{collect_dataset, generate_excitation, pendulum_step, Dataset, DisturbanceProfile};
use crate::terminal::{scheduled_lyapunov_slack, synthesize_terminal, TerminalIngredients};

use super::scenario::Scenario;
use super::HarnessError;

/// Which controller drives the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerVariant {
    /// Kernelized data-driven controller.
    Vkdpc,
    /// Analytic model-based baseline.
    Vnmpc,
}

impl ControllerVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerVariant::Vkdpc => "vkdpc",
            ControllerVariant::Vnmpc => "vnmpc",
        }
    }
}

impl std::str::FromStr for ControllerVariant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "vkdpc" => Ok(ControllerVariant::Vkdpc),
            "vnmpc" => Ok(ControllerVariant::Vnmpc),
            other => Err(HarnessError::Config(format!(
                "unknown controller variant {other:?} (expected vkdpc or vnmpc)"
            ))),
        }
    }
}

/// Velocity-matrix source behind a variant.
pub enum MatrixSource<'a> {
    Kernel(&'a VelocityKernelModel),
    Analytic(AnalyticVelocityModel),
}

impl VelocityMatrixSource for MatrixSource<'_> {
    fn dims(&self) -> ModelDims {
        match self {
            MatrixSource::Kernel(m) => m.dims(),
            MatrixSource::Analytic(a) => a.dims(),
        }
    }

    fn velocity_matrices(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        match self {
            MatrixSource::Kernel(m) => m.velocity_matrices(x, u),
            MatrixSource::Analytic(a) => a.velocity_matrices(x, u),
        }
    }
}

/// One closed-loop sample: everything needed to rebuild plots and metrics.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub k: usize,
    pub x1: f64,
    pub x2: f64,
    pub u: f64,
    pub du: f64,
    pub y: f64,
    pub y_r: f64,
    pub d: f64,
    pub cost: f64,
    pub sqp_iterations: usize,
    pub converged: bool,
    pub terminal_slack: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationLog {
    pub variant: ControllerVariant,
    pub records: Vec<StepRecord>,
    /// Full per-step solver reports, streamed out as JSON lines on request.
    pub reports: Vec<crate::controller::SolveReport>,
    /// Worst Lyapunov-condition slack of the active terminal ingredients,
    /// sampled at the realized closed-loop scheduling points. The
    /// construction certifies the condition at the frozen reference point
    /// only; this measures how far the scheduled matrices stray from it.
    pub worst_lyapunov_slack: f64,
}

impl SimulationLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Generates the identification dataset for a scenario (open loop, zero
/// disturbance).
pub fn identification_dataset(scenario: &Scenario) -> Result<Dataset, HarnessError> {
    let inputs = generate_excitation(
        &scenario.excitation,
        scenario.identification.samples,
        scenario.identification_seed(),
    )?;
    Ok(collect_dataset(
        &scenario.plant,
        &inputs,
        Vector2::zeros(),
        &DisturbanceProfile::zero(),
    )?)
}

/// Fresh-excitation dataset for validation, sharing the excitation shape but
/// a different seed.
pub fn validation_dataset(scenario: &Scenario, samples: usize) -> Result<Dataset, HarnessError> {
    let inputs = generate_excitation(&scenario.excitation, samples, scenario.validation_seed())?;
    Ok(collect_dataset(
        &scenario.plant,
        &inputs,
        Vector2::zeros(),
        &DisturbanceProfile::zero(),
    )?)
}

/// Full identification pipeline: excitation, recording, center subsampling,
/// regressors and the least-squares fit.
pub fn fit_from_scenario(
    scenario: &Scenario,
) -> Result<(VelocityKernelModel, FitReport, Dataset), HarnessError> {
    let data = identification_dataset(scenario)?;
    let (centers_xu, centers_x) = subsample_centers(&data, scenario.centers.stride)?;
    let bundle = build_regressors(&data, &scenario.kernel, &centers_xu, &centers_x)?;
    let (model, report) = fit_velocity_model(&bundle, scenario.identification.ridge)?;
    Ok((model, report, data))
}

/// Per-reference terminal-ingredient cache keyed by the exact reference bits.
pub struct TerminalCache {
    entries: HashMap<u64, Rc<TerminalIngredients>>,
}

impl TerminalCache {
    pub fn new() -> Self {
        Self {
            entries: HashMap::new(),
        }
    }

    pub fn get_or_synthesize(
        &mut self,
        source: &MatrixSource<'_>,
        scenario: &Scenario,
        y_r: f64,
    ) -> Result<Rc<TerminalIngredients>, HarnessError> {
        if let Some(ti) = self.entries.get(&y_r.to_bits()) {
            return Ok(ti.clone());
        }
        let dims = source.dims();
        let cfg = scenario.controller.to_config(&dims);
        let x_r = DVector::from_column_slice(scenario.plant.equilibrium_state(y_r).as_slice());
        let u_r = DVector::from_vec(vec![scenario.plant.equilibrium_input(y_r)]);
        let ti = Rc::new(synthesize_terminal(
            source, &x_r, &u_r, y_r, &cfg.q, &cfg.r, &cfg.z_set, &cfg.du_set,
        )?);
        self.entries.insert(y_r.to_bits(), ti.clone());
        Ok(ti)
    }
}

impl Default for TerminalCache {
    fn default() -> Self {
        Self::new()
    }
}

/// Runs the scenario closed loop with one controller variant. The controller
/// sees only `(x_k, y_{k-1}, y_r)`; terminal ingredients are synthesized on
/// demand at each new reference and cached.
pub fn run_closed_loop(
    scenario: &Scenario,
    variant: ControllerVariant,
    model: Option<&VelocityKernelModel>,
) -> Result<SimulationLog, HarnessError> {
    scenario.validate()?;
    let source = match variant {
        ControllerVariant::Vkdpc => {
            let model = model.ok_or_else(|| {
                HarnessError::Config("vkdpc requires a fitted kernel model".into())
            })?;
            MatrixSource::Kernel(model)
        }
        ControllerVariant::Vnmpc => {
            MatrixSource::Analytic(AnalyticVelocityModel::new(scenario.plant))
        }
    };
    let dims = source.dims();
    let cfg = scenario.controller.to_config(&dims);
    let disturbance = scenario.disturbance_profile()?;
    let mut cache = TerminalCache::new();

    let mut records = Vec::with_capacity(scenario.duration);
    let mut reports = Vec::with_capacity(scenario.duration);
    let mut worst_lyapunov_slack = f64::NEG_INFINITY;
    let mut state = ControllerState::new(dims.m);
    let mut x = Vector2::<f64>::zeros();
    // Steady-start convention: the first solve sees y_prev = y_0.
    let mut y_prev = x[1];

    for k in 0..scenario.duration {
        let y_r = scenario.reference_at(k);
        let ti = cache.get_or_synthesize(&source, scenario, y_r)?;

        let x_vec = DVector::from_column_slice(x.as_slice());
        let y_prev_vec = DVector::from_vec(vec![y_prev]);
        let u_before = state.u_prev[0];
        let (u, report, next_state) = control_update(
            &source,
            &state,
            &x_vec,
            &y_prev_vec,
            y_r,
            &cfg,
            &ti,
        )
        .map_err(|e| HarnessError::Solver {
            step: k,
            source: Box::new(e),
        })?;

        worst_lyapunov_slack = worst_lyapunov_slack.max(scheduled_lyapunov_slack(
            &source,
            &ti,
            &cfg.q,
            &cfg.r,
            [(&x_vec, &u)],
        ));

        let d = disturbance.value_at(k);
        let (x_next, y_k) = pendulum_step(&scenario.plant, &x, u[0], d);
        if !(x_next[0].is_finite() && x_next[1].is_finite() && u[0].is_finite()) {
            return Err(HarnessError::Diverged { step: k });
        }

        records.push(StepRecord {
            k,
            x1: x[0],
            x2: x[1],
            u: u[0],
            du: u[0] - u_before,
            y: y_k,
            y_r,
            d,
            cost: report.cost,
            sqp_iterations: report.sqp_iterations,
            converged: report.converged,
            terminal_slack: report.terminal_slack,
            wall_ms: report.wall_time * 1e3,
        });
        reports.push(report);

        state = next_state;
        y_prev = y_k;
        x = x_next;
    }

    Ok(SimulationLog {
        variant,
        records,
        reports,
        worst_lyapunov_slack,
    })
}
