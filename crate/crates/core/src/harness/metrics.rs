//! Metrics computed from closed-loop logs: per-segment tracking errors, SQP
//! iteration statistics, timing, the value-function decrease diagnostic and
//! cross-controller deviation.

use serde::Serialize;

use super::scenario::Scenario;
use super::sim::SimulationLog;
use super::HarnessError;

#[derive(Debug, Clone, Serialize)]
pub struct SegmentError {
    pub start: usize,
    pub end: usize,
    pub y_r: f64,
    /// `|y - y_r|` at the last step of the segment.
    pub final_abs_error: f64,
}

/// Diagnostics for one controller run.
#[derive(Debug, Clone, Serialize)]
pub struct VariantMetrics {
    pub variant: String,
    pub segment_errors: Vec<SegmentError>,
    pub mean_sqp_iterations: f64,
    pub max_sqp_iterations: usize,
    pub all_converged: bool,
    pub mean_step_ms: f64,
    pub max_step_ms: f64,
    /// Fraction of applicable steps violating the expected value-function
    /// decrease, over windows where reference and disturbance are constant.
    /// `None` when no step qualifies.
    pub decrease_violation_fraction: Option<f64>,
    /// Number of steps entering the decrease diagnostic.
    pub decrease_steps_checked: usize,
    pub max_terminal_slack: f64,
    /// Worst Lyapunov slack of the terminal ingredients sampled at the
    /// realized scheduling points (diagnostic; exactly zero only at the
    /// frozen reference).
    pub scheduled_lyapunov_slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub primary: VariantMetrics,
    pub secondary: Option<VariantMetrics>,
    /// `max_k |y_A(k) - y_B(k)|` when two logs are compared.
    pub max_output_deviation: Option<f64>,
}

impl Metrics {
    /// Zeroes wall-clock fields so that emitted artifacts are reproducible.
    pub fn without_timing(mut self) -> Self {
        self.primary.mean_step_ms = 0.0;
        self.primary.max_step_ms = 0.0;
        if let Some(sec) = self.secondary.as_mut() {
            sec.mean_step_ms = 0.0;
            sec.max_step_ms = 0.0;
        }
        self
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        serde_json::to_string_pretty(self).map_err(|e| HarnessError::Artifact(e.to_string()))
    }
}

/// Steps at which either the reference or the disturbance changes value.
fn change_steps(scenario: &Scenario) -> Vec<usize> {
    let mut steps: Vec<usize> = scenario
        .references
        .iter()
        .map(|s| s.start)
        .chain(scenario.disturbance.iter().map(|s| s.start))
        .collect();
    steps.sort_unstable();
    steps.dedup();
    steps
}

fn variant_metrics(scenario: &Scenario, log: &SimulationLog) -> VariantMetrics {
    let records = &log.records;
    let n = records.len();

    let segment_errors = scenario
        .reference_windows()
        .into_iter()
        .filter(|(_, end, _)| *end <= n)
        .map(|(start, end, y_r)| {
            let last = &records[end - 1];
            SegmentError {
                start,
                end,
                y_r,
                final_abs_error: (last.y - y_r).abs(),
            }
        })
        .collect();

    let mean_sqp_iterations = if n == 0 {
        0.0
    } else {
        records.iter().map(|r| r.sqp_iterations as f64).sum::<f64>() / n as f64
    };
    let max_sqp_iterations = records.iter().map(|r| r.sqp_iterations).max().unwrap_or(0);
    let mean_step_ms = if n == 0 {
        0.0
    } else {
        records.iter().map(|r| r.wall_ms).sum::<f64>() / n as f64
    };
    let max_step_ms = records.iter().map(|r| r.wall_ms).fold(0.0, f64::max);

    // Value-function decrease: within windows of constant (reference,
    // disturbance), skipping the two steps after each change so the velocity
    // state has absorbed the jump.
    let q = scenario
        .controller
        .to_config(&crate::model::ModelDims { n: 2, m: 1, p: 1 })
        .q;
    let changes = change_steps(scenario);
    let mut checked = 0usize;
    let mut violations = 0usize;
    for k in 0..n.saturating_sub(1) {
        // Both k and k+1 must sit at least two steps past the latest change.
        let latest_change = changes
            .iter()
            .filter(|&&c| c <= k + 1)
            .max()
            .copied()
            .unwrap_or(0);
        if k < latest_change + 2 {
            continue;
        }
        let r = &records[k];
        let r_next = &records[k + 1];
        // z0(k) - r in extended coordinates: (y_{k-1} - y_r, Δx_k).
        let y_prev = if k == 0 { records[0].x2 } else { records[k - 1].y };
        let (dx1, dx2) = if k == 0 {
            (0.0, 0.0)
        } else {
            (r.x1 - records[k - 1].x1, r.x2 - records[k - 1].x2)
        };
        let dz = [y_prev - r.y_r, dx1, dx2];
        let mut stage = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                stage += dz[a] * q[(a, b)] * dz[b];
            }
        }
        let bound = -stage + 1e-3 * (1.0 + r.cost);
        checked += 1;
        if r_next.cost - r.cost > bound {
            violations += 1;
        }
    }

    VariantMetrics {
        variant: log.variant.as_str().to_string(),
        segment_errors,
        mean_sqp_iterations,
        max_sqp_iterations,
        all_converged: records.iter().all(|r| r.converged),
        mean_step_ms,
        max_step_ms,
        decrease_violation_fraction: if checked == 0 {
            None
        } else {
            Some(violations as f64 / checked as f64)
        },
        decrease_steps_checked: checked,
        max_terminal_slack: records.iter().map(|r| r.terminal_slack).fold(0.0, f64::max),
        scheduled_lyapunov_slack: log.worst_lyapunov_slack,
    }
}

/// Computes metrics for one log, or for a pair sharing the same scenario
/// (`log_b` becomes `secondary`, with the output-deviation field filled).
pub fn compute_metrics(
    scenario: &Scenario,
    log_a: &SimulationLog,
    log_b: Option<&SimulationLog>,
) -> Result<Metrics, HarnessError> {
    if let Some(b) = log_b {
        if b.len() != log_a.len() {
            return Err(HarnessError::Config(format!(
                "cannot compare logs of different lengths ({} vs {})",
                log_a.len(),
                b.len()
            )));
        }
    }
    let max_output_deviation = log_b.map(|b| {
        log_a
            .records
            .iter()
            .zip(&b.records)
            .map(|(ra, rb)| (ra.y - rb.y).abs())
            .fold(0.0, f64::max)
    });
    Ok(Metrics {
        primary: variant_metrics(scenario, log_a),
        secondary: log_b.map(|b| variant_metrics(scenario, b)),
        max_output_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::ReferenceSegment;
    use crate::harness::sim::{ControllerVariant, StepRecord};
    use crate::plant::DisturbanceSegment;

    fn fake_log(n: usize, y: impl Fn(usize) -> f64) -> SimulationLog {
        SimulationLog {
            variant: ControllerVariant::Vnmpc,
            reports: Vec::new(),
            worst_lyapunov_slack: f64::NEG_INFINITY,
            records: (0..n)
                .map(|k| StepRecord {
                    k,
                    x1: 0.0,
                    x2: y(k),
                    u: 0.0,
                    du: 0.0,
                    y: y(k),
                    y_r: 0.5,
                    d: 0.0,
                    cost: 1.0 / (k + 1) as f64,
                    sqp_iterations: 2,
                    converged: true,
                    terminal_slack: 0.0,
                    wall_ms: 1.0,
                })
                .collect(),
        }
    }

    fn tiny_scenario(n: usize) -> Scenario {
        Scenario {
            duration: n,
            references: vec![ReferenceSegment {
                start: 0,
                value: 0.5,
            }],
            disturbance: vec![DisturbanceSegment {
                start: 0,
                value: 0.0,
            }],
            ..Scenario::default()
        }
    }

    #[test]
    fn identical_logs_have_zero_deviation() {
        let scenario = tiny_scenario(10);
        let log = fake_log(10, |_| 0.5);
        let metrics = compute_metrics(&scenario, &log, Some(&log)).unwrap();
        assert_eq!(metrics.max_output_deviation, Some(0.0));
    }

    #[test]
    fn perfect_tracking_has_zero_terminal_error() {
        let scenario = tiny_scenario(10);
        let log = fake_log(10, |_| 0.5);
        let metrics = compute_metrics(&scenario, &log, None).unwrap();
        assert_eq!(metrics.primary.segment_errors.len(), 1);
        assert_eq!(metrics.primary.segment_errors[0].final_abs_error, 0.0);
        assert_eq!(metrics.primary.mean_sqp_iterations, 2.0);
    }

    #[test]
    fn mismatched_lengths_error() {
        let scenario = tiny_scenario(10);
        let a = fake_log(10, |_| 0.5);
        let b = fake_log(9, |_| 0.5);
        assert!(compute_metrics(&scenario, &a, Some(&b)).is_err());
    }

    #[test]
    fn empty_log_serializes_with_nulls() {
        let scenario = tiny_scenario(0);
        let log = fake_log(0, |_| 0.0);
        let metrics = compute_metrics(&scenario, &log, None).unwrap();
        assert!(metrics.primary.decrease_violation_fraction.is_none());
        let json = metrics.to_json().unwrap();
        assert!(json.contains("null"));
        assert!(serde_json::from_str::<serde_json::Value>(&json).is_ok());
    }

    #[test]
    fn timing_scrub_zeroes_wall_fields() {
        let scenario = tiny_scenario(10);
        let log = fake_log(10, |_| 0.5);
        let metrics = compute_metrics(&scenario, &log, Some(&log))
            .unwrap()
            .without_timing();
        assert_eq!(metrics.primary.mean_step_ms, 0.0);
        assert_eq!(metrics.secondary.unwrap().max_step_ms, 0.0);
    }
}
