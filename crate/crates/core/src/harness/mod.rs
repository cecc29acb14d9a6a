//! Scenario orchestration: configuration, the identification pipeline,
//! closed-loop simulation of both controller variants, metrics and artifact
//! emission.

pub mod artifacts;
pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod svg;

pub use artifacts::{
    emit_artifacts, emit_closed_loop_svg, emit_metrics, emit_reports_jsonl, emit_terminal,
    emit_trajectories, emit_validation,
};
pub use metrics::{compute_metrics, Metrics, SegmentError, VariantMetrics};
pub use scenario::{
    CenterConfig, ControllerSettings, IdentificationConfig, ReferenceSegment, Scenario,
};
pub use sim::{
    fit_from_scenario, identification_dataset, run_closed_loop, validation_dataset,
    ControllerVariant, MatrixSource, SimulationLog, StepRecord, TerminalCache,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario config error: {0}")]
    Config(String),
    #[error("solver failure at step {step}: {source}")]
    Solver {
        step: usize,
        #[source]
        source: Box<crate::controller::ControllerError>,
    },
    #[error("closed loop diverged to non-finite values at step {step}")]
    Diverged { step: usize },
    #[error("artifact emission failed: {0}")]
    Artifact(String),
    #[error(transparent)]
    Plant(#[from] crate::plant::PlantError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Terminal(#[from] crate::terminal::TerminalError),
}

impl HarnessError {
    /// Process exit code the CLI maps this error to: 2 for configuration
    /// problems, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Plant(_) => 2,
            HarnessError::Solver { .. }
            | HarnessError::Diverged { .. }
            | HarnessError::Model(_)
            | HarnessError::Terminal(_)
            | HarnessError::Artifact(_) => 3,
        }
    }
}
