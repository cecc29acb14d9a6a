//! Artifact emission: trajectory CSVs, metrics JSON and SVG plots. Emitted
//! files are byte-reproducible for a fixed scenario unless `stamp` is set,
//! which embeds measured wall times.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::model::ValidationReport;
use crate::terminal::TerminalIngredients;

use super::metrics::Metrics;
use super::scenario::Scenario;
use super::sim::SimulationLog;
use super::svg::{render, Panel, Series, PALETTE};
use super::HarnessError;

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, HarnessError> {
    let file = std::fs::File::create(path)
        .map_err(|e| HarnessError::Artifact(format!("cannot write {}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(file))
}

/// `trajectories_<variant>.csv` with the full per-step record. Wall times are
/// zeroed unless `stamp` is set so that repeated runs are byte-identical.
pub fn emit_trajectories(
    log: &SimulationLog,
    out_dir: &Path,
    stamp: bool,
) -> Result<PathBuf, HarnessError> {
    let path = out_dir.join(format!("trajectories_{}.csv", log.variant.as_str()));
    let mut w = create(&path)?;
    writeln!(w, "k,x1,x2,u,du,y,yr,d,V,iters,ms").map_err(io_err)?;
    for r in &log.records {
        let ms = if stamp { r.wall_ms } else { 0.0 };
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.3}",
            r.k, r.x1, r.x2, r.u, r.du, r.y, r.y_r, r.d, r.cost, r.sqp_iterations, ms
        )
        .map_err(io_err)?;
    }
    Ok(path)
}

/// `reports_<variant>.jsonl`: one solver report per line for downstream
/// tooling. Wall times are zeroed unless `stamp` is set.
pub fn emit_reports_jsonl(
    log: &SimulationLog,
    out_dir: &Path,
    stamp: bool,
) -> Result<PathBuf, HarnessError> {
    let path = out_dir.join(format!("reports_{}.jsonl", log.variant.as_str()));
    let mut w = create(&path)?;
    for report in &log.reports {
        let mut r = report.clone();
        if !stamp {
            r.wall_time = 0.0;
        }
        let line =
            serde_json::to_string(&r).map_err(|e| HarnessError::Artifact(e.to_string()))?;
        writeln!(w, "{line}").map_err(io_err)?;
    }
    Ok(path)
}

/// `metrics.json`; timing fields are zeroed unless `stamp` is set.
pub fn emit_metrics(
    metrics: &Metrics,
    out_dir: &Path,
    stamp: bool,
) -> Result<PathBuf, HarnessError> {
    let path = out_dir.join("metrics.json");
    let scrubbed;
    let to_write = if stamp {
        metrics
    } else {
        scrubbed = metrics.clone().without_timing();
        &scrubbed
    };
    let mut w = create(&path)?;
    w.write_all(to_write.to_json()?.as_bytes()).map_err(io_err)?;
    w.write_all(b"\n").map_err(io_err)?;
    Ok(path)
}

/// `validation.csv` plus the measured-vs-predicted output plot.
pub fn emit_validation(
    scenario: &Scenario,
    report: &ValidationReport,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let csv_path = out_dir.join("validation.csv");
    report
        .save_csv(&csv_path)
        .map_err(|e| HarnessError::Artifact(e.to_string()))?;

    let ts = scenario.plant.sampling_time;
    let time = |k: usize| k as f64 * ts;
    let y: Vec<(f64, f64)> = report
        .steps
        .iter()
        .zip(&report.y)
        .map(|(&k, v)| (time(k), v[0]))
        .collect();
    let y_hat: Vec<(f64, f64)> = report
        .steps
        .iter()
        .zip(&report.y_hat)
        .map(|(&k, v)| (time(k), v[0]))
        .collect();
    let err: Vec<(f64, f64)> = report
        .steps
        .iter()
        .zip(&report.error)
        .map(|(&k, v)| (time(k), v[0]))
        .collect();
    let panels = vec![
        Panel {
            title: format!("open-loop output prediction (rmse {:.3e} rad)", report.rmse),
            x_label: "time [s]".into(),
            y_label: "angle [rad]".into(),
            series: vec![
                Series::line("measured", PALETTE[1], y),
                Series::line("predicted", PALETTE[0], y_hat),
            ],
        },
        Panel {
            title: "prediction error".into(),
            x_label: "time [s]".into(),
            y_label: "e [rad]".into(),
            series: vec![Series::line("error", PALETTE[3], err)],
        },
    ];
    let svg_path = out_dir.join("validation.svg");
    let mut w = create(&svg_path)?;
    w.write_all(render(&panels).as_bytes()).map_err(io_err)?;
    Ok(vec![csv_path, svg_path])
}

/// Terminal-set halfspace/vertex CSVs plus a 2D slice plot at
/// `y_prev - y_r = 0`, overlaying a second set when given.
pub fn emit_terminal(
    primary: &TerminalIngredients,
    primary_label: &str,
    secondary: Option<(&TerminalIngredients, &str)>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let hs_path = out_dir.join("terminal_set.csv");
    let vx_path = out_dir.join("terminal_vertices.csv");
    primary
        .save_csv(&hs_path, &vx_path)
        .map_err(|e| HarnessError::Artifact(e.to_string()))?;

    let mut series = vec![Series::polygon(
        primary_label,
        PALETTE[0],
        slice_polygon(primary)?,
    )];
    if let Some((other, label)) = secondary {
        series.push(Series::polygon(label, PALETTE[1], slice_polygon(other)?));
    }
    let panel = Panel {
        title: format!("terminal set slice at y_prev = y_r ({})", fmt_ref(primary.y_r)),
        x_label: "Δx1".into(),
        y_label: "Δx2".into(),
        series,
    };
    let svg_path = out_dir.join("terminal_set.svg");
    let mut w = create(&svg_path)?;
    w.write_all(render(&[panel]).as_bytes()).map_err(io_err)?;
    Ok(vec![hs_path, vx_path, svg_path])
}

fn fmt_ref(y_r: f64) -> String {
    format!("{y_r}")
}

/// Intersects the terminal set with the plane fixing its first coordinate at
/// zero and returns the polygon vertices ordered by angle.
fn slice_polygon(ti: &TerminalIngredients) -> Result<Vec<(f64, f64)>, HarnessError> {
    let (a, b) = ti.set.rows();
    let dim = a.ncols();
    if dim != 3 {
        return Err(HarnessError::Artifact(format!(
            "terminal slice plot expects dimension 3, got {dim}"
        )));
    }
    let sliced = crate::polytope::Polytope::from_rows_unchecked(
        a.columns(1, 2).into_owned(),
        b.clone(),
    );
    let reduced = sliced
        .reduce()
        .map_err(|e| HarnessError::Artifact(format!("slice is degenerate: {e}")))?;
    let mut verts: Vec<(f64, f64)> = reduced
        .vertices()
        .map_err(|e| HarnessError::Artifact(e.to_string()))?
        .iter()
        .map(|v| (v[0], v[1]))
        .collect();
    let cx = verts.iter().map(|p| p.0).sum::<f64>() / verts.len().max(1) as f64;
    let cy = verts.iter().map(|p| p.1).sum::<f64>() / verts.len().max(1) as f64;
    verts.sort_by(|p, q| {
        let ap = (p.1 - cy).atan2(p.0 - cx);
        let aq = (q.1 - cy).atan2(q.0 - cx);
        ap.partial_cmp(&aq).unwrap()
    });
    Ok(verts)
}

/// Closed-loop plot: output vs reference and disturbance, inputs, increments.
pub fn emit_closed_loop_svg(
    scenario: &Scenario,
    logs: &[&SimulationLog],
    out_dir: &Path,
) -> Result<PathBuf, HarnessError> {
    let ts = scenario.plant.sampling_time;
    let mut output_series = Vec::new();
    let mut input_series = Vec::new();
    let mut du_series = Vec::new();
    for (i, log) in logs.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let name = log.variant.as_str();
        output_series.push(Series::line(
            format!("y ({name})"),
            color,
            log.records.iter().map(|r| (r.k as f64 * ts, r.y)).collect(),
        ));
        input_series.push(Series::line(
            format!("u ({name})"),
            color,
            log.records.iter().map(|r| (r.k as f64 * ts, r.u)).collect(),
        ));
        du_series.push(Series::line(
            format!("du ({name})"),
            color,
            log.records.iter().map(|r| (r.k as f64 * ts, r.du)).collect(),
        ));
    }
    if let Some(first) = logs.first() {
        output_series.push(Series::line(
            "reference",
            "#444444",
            first
                .records
                .iter()
                .map(|r| (r.k as f64 * ts, r.y_r))
                .collect(),
        ));
        output_series.push(Series::line(
            "disturbance",
            "#999999",
            first.records.iter().map(|r| (r.k as f64 * ts, r.d)).collect(),
        ));
    }
    let panels = vec![
        Panel {
            title: "closed-loop output tracking".into(),
            x_label: "time [s]".into(),
            y_label: "angle [rad]".into(),
            series: output_series,
        },
        Panel {
            title: "input torque".into(),
            x_label: "time [s]".into(),
            y_label: "u".into(),
            series: input_series,
        },
        Panel {
            title: "input increments".into(),
            x_label: "time [s]".into(),
            y_label: "du".into(),
            series: du_series,
        },
    ];
    let path = out_dir.join("closedloop.svg");
    let mut w = create(&path)?;
    w.write_all(render(&panels).as_bytes()).map_err(io_err)?;
    Ok(path)
}

/// Composite emission for `simulate`/`compare`: per-variant trajectory CSVs,
/// `metrics.json` and the closed-loop SVG.
pub fn emit_artifacts(
    scenario: &Scenario,
    logs: &[&SimulationLog],
    metrics: &Metrics,
    out_dir: &Path,
    stamp: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| HarnessError::Artifact(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut paths = Vec::new();
    for log in logs {
        paths.push(emit_trajectories(log, out_dir, stamp)?);
        paths.push(emit_reports_jsonl(log, out_dir, stamp)?);
    }
    paths.push(emit_metrics(metrics, out_dir, stamp)?);
    if !logs.is_empty() {
        paths.push(emit_closed_loop_svg(scenario, logs, out_dir)?);
    }
    Ok(paths)
}

fn io_err(e: std::io::Error) -> HarnessError {
    HarnessError::Artifact(e.to_string())
}
