//! Scenario configuration: one TOML file drives data generation, fitting,
//! validation, terminal synthesis and the closed-loop runs. Every field has
//! a default matching the pendulum benchmark.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::kernel::KernelSpec;
use crate::model::ModelDims;
use crate::plant::{
    DisturbanceProfile, DisturbanceSegment, ExcitationConfig, PendulumParams,
};
use crate::polytope::Polytope;

use super::HarnessError;

/// One piecewise-constant reference segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSegment {
    pub start: usize,
    pub value: f64,
}

/// Center subsampling rule: every `stride`-th identification sample becomes a
/// kernel center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CenterConfig {
    pub stride: usize,
}

impl Default for CenterConfig {
    fn default() -> Self {
        Self { stride: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentificationConfig {
    /// Number of applied excitation inputs in the identification run.
    pub samples: usize,
    /// Tikhonov weight for the least-squares fit (0 = plain pseudoinverse).
    pub ridge: f64,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            samples: 2000,
            ridge: 0.0,
        }
    }
}

/// Scalar-weight controller settings as they appear in the scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerSettings {
    pub horizon: usize,
    /// `Q = q_weight · I` on the extended state.
    pub q_weight: f64,
    /// `R = r_weight · I` on input increments.
    pub r_weight: f64,
    pub sqp_tolerance: f64,
    pub max_sqp_iters: usize,
    /// State constraint `|z_i| ≤ z_bound`.
    pub z_bound: f64,
    /// Increment constraint `|Δu| ≤ du_bound`.
    pub du_bound: f64,
    /// 0 keeps the terminal constraint hard.
    pub terminal_slack_weight: f64,
    pub qp_tolerance: f64,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            horizon: 20,
            q_weight: 1000.0,
            r_weight: 10.0,
            sqp_tolerance: 1e-8,
            max_sqp_iters: 30,
            z_bound: 2.0,
            du_bound: 2.0,
            terminal_slack_weight: 0.0,
            qp_tolerance: 1e-10,
        }
    }
}

impl ControllerSettings {
    pub fn to_config(&self, dims: &ModelDims) -> ControllerConfig {
        ControllerConfig {
            horizon: self.horizon,
            q: DMatrix::identity(dims.nz(), dims.nz()) * self.q_weight,
            r: DMatrix::identity(dims.m, dims.m) * self.r_weight,
            eps: self.sqp_tolerance,
            max_sqp_iters: self.max_sqp_iters,
            z_set: Polytope::box_nd(dims.nz(), self.z_bound),
            du_set: Polytope::box_nd(dims.m, self.du_bound),
            terminal_slack_weight: self.terminal_slack_weight,
            qp_tol: self.qp_tolerance,
        }
    }
}

/// The full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub seed: u64,
    /// Closed-loop length in steps.
    pub duration: usize,
    pub plant: PendulumParams,
    pub excitation: ExcitationConfig,
    pub kernel: KernelSpec,
    pub centers: CenterConfig,
    pub identification: IdentificationConfig,
    pub controller: ControllerSettings,
    pub references: Vec<ReferenceSegment>,
    pub disturbance: Vec<DisturbanceSegment>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            duration: 900,
            plant: PendulumParams::benchmark(),
            excitation: ExcitationConfig::default(),
            kernel: KernelSpec::default_imq(),
            centers: CenterConfig::default(),
            identification: IdentificationConfig::default(),
            controller: ControllerSettings::default(),
            references: vec![
                ReferenceSegment {
                    start: 0,
                    value: 0.5,
                },
                ReferenceSegment {
                    start: 300,
                    value: -0.3,
                },
                ReferenceSegment {
                    start: 600,
                    value: 0.0,
                },
            ],
            // Initially zero, then stepping between two non-zero torques small
            // enough to keep the loop well inside the state constraints.
            disturbance: {
                let mut segs = vec![DisturbanceSegment {
                    start: 0,
                    value: 0.0,
                }];
                for (i, start) in (150..=825).step_by(75).enumerate() {
                    segs.push(DisturbanceSegment {
                        start,
                        value: if i % 2 == 0 { 0.1 } else { -0.05 },
                    });
                }
                segs
            },
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            HarnessError::Config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    // Duration 0 is allowed and produces an empty closed-loop log.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.references.is_empty() {
            return Err(HarnessError::Config(
                "at least one reference segment is required".into(),
            ));
        }
        if self.references[0].start != 0 {
            return Err(HarnessError::Config(
                "the first reference segment must start at step 0".into(),
            ));
        }
        for w in self.references.windows(2) {
            if w[1].start <= w[0].start {
                return Err(HarnessError::Config(
                    "reference segment starts must be strictly increasing".into(),
                ));
            }
        }
        if let Some(last) = self.references.last() {
            if self.duration > 0 && last.start >= self.duration {
                return Err(HarnessError::Config(format!(
                    "reference segment at step {} starts beyond the duration {}",
                    last.start, self.duration
                )));
            }
        }
        self.excitation
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        // Builds the profile to reuse its ordering validation.
        self.disturbance_profile()?;
        if self.centers.stride == 0 {
            return Err(HarnessError::Config("center stride must be at least 1".into()));
        }
        if self.identification.samples < 3 {
            return Err(HarnessError::Config(
                "identification needs at least 3 samples".into(),
            ));
        }
        if self.identification.ridge.is_nan() || self.identification.ridge < 0.0 {
            return Err(HarnessError::Config("ridge must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn disturbance_profile(&self) -> Result<DisturbanceProfile, HarnessError> {
        DisturbanceProfile::new(self.disturbance.clone())
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Active reference at a step.
    pub fn reference_at(&self, step: usize) -> f64 {
        self.references
            .iter()
            .rev()
            .find(|seg| seg.start <= step)
            .map(|seg| seg.value)
            .expect("validated: first segment starts at 0")
    }

    /// `(start, end_exclusive, y_r)` for every constant-reference window
    /// clipped to the duration.
    pub fn reference_windows(&self) -> Vec<(usize, usize, f64)> {
        let mut windows = Vec::new();
        for (i, seg) in self.references.iter().enumerate() {
            let end = self
                .references
                .get(i + 1)
                .map(|next| next.start)
                .unwrap_or(self.duration)
                .min(self.duration);
            if seg.start < end {
                windows.push((seg.start, end, seg.value));
            }
        }
        windows
    }

    /// Seed for the identification excitation.
    pub fn identification_seed(&self) -> u64 {
        self.seed
    }

    /// Seed for fresh validation excitation, distinct from identification.
    pub fn validation_seed(&self) -> u64 {
        self.seed.wrapping_add(0x9e37_79b9)
    }
}
