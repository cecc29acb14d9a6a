//! Acceptance suite: one test per shipping criterion, each printing a
//! `criterion NN PASS` line with the measured quantity. Expensive shared
//! artifacts (the benchmark fit and the comparison run) are computed once.
//!
//! Run with `cargo test -p kdpc --test acceptance -- --nocapture` to see the
//! per-criterion lines.

use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector2};

use kdpc::analytic::{analytic_gradients, AnalyticVelocityModel};
use kdpc::harness::{
    compute_metrics, emit_artifacts, fit_from_scenario, run_closed_loop, validation_dataset,
    ControllerVariant, MatrixSource, Metrics, Scenario, SimulationLog, TerminalCache,
};
use kdpc::kernel::{KernelFamily, KernelSpec};
use kdpc::model::{
    build_regressors, fit_velocity_model, subsample_centers, validate_open_loop,
    VelocityKernelModel,
};
use kdpc::optim::{solve_qp, QpProblem, QpStatus};
use kdpc::plant::{collect_dataset, generate_excitation, pendulum_step, DisturbanceProfile};
use kdpc::polytope::Polytope;
use kdpc::terminal::{check_terminal_certificates, max_invariant_set, TerminalIngredients};

struct SharedFit {
    model: VelocityKernelModel,
    fit_seconds: f64,
}

struct SharedCompare {
    scenario: Scenario,
    log_k: SimulationLog,
    log_n: SimulationLog,
    metrics: Metrics,
}

fn shared_fit() -> &'static SharedFit {
    static FIT: OnceLock<SharedFit> = OnceLock::new();
    FIT.get_or_init(|| {
        let scenario = Scenario::default();
        let start = Instant::now();
        let (model, report, _) = fit_from_scenario(&scenario).expect("benchmark fit");
        assert!(
            report.rank_x > 0 && report.rank_y > 0,
            "degenerate benchmark fit"
        );
        SharedFit {
            model,
            fit_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

fn shared_compare() -> &'static SharedCompare {
    static COMPARE: OnceLock<SharedCompare> = OnceLock::new();
    COMPARE.get_or_init(|| {
        let scenario = Scenario::default();
        let model = &shared_fit().model;
        let log_k = run_closed_loop(&scenario, ControllerVariant::Vkdpc, Some(model))
            .expect("vkdpc closed loop");
        let log_n =
            run_closed_loop(&scenario, ControllerVariant::Vnmpc, None).expect("vnmpc closed loop");
        let metrics = compute_metrics(&scenario, &log_k, Some(&log_n)).expect("metrics");
        SharedCompare {
            scenario,
            log_k,
            log_n,
            metrics,
        }
    })
}

fn xorshift(seed: &mut u64) -> f64 {
    *seed ^= *seed << 13;
    *seed ^= *seed >> 7;
    *seed ^= *seed << 17;
    (*seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

#[test]
fn criterion_01_gradient_oracle() {
    let start = Instant::now();
    let params = kdpc::plant::PendulumParams::benchmark();
    let h = 1e-6;
    let mut seed = 0xace01_u64;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x = Vector2::new(2.0 * xorshift(&mut seed), 2.0 * xorshift(&mut seed));
        let u = 2.0 * xorshift(&mut seed);
        let (dfdx, dfdu, dhdx) = analytic_gradients(&params, &x, u);
        for col in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[col] += h;
            xm[col] -= h;
            let (fp, yp) = pendulum_step(&params, &xp, u, 0.0);
            let (fm, ym) = pendulum_step(&params, &xm, u, 0.0);
            for row in 0..2 {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                let exact = dfdx[(row, col)];
                worst = worst.max((fd - exact).abs() / exact.abs().max(1e-6));
            }
            let fd_h = (yp - ym) / (2.0 * h);
            worst = worst.max((fd_h - dhdx[(0, col)]).abs() / dhdx[(0, col)].abs().max(1e-6));
        }
        let (fp, _) = pendulum_step(&params, &x, u + h, 0.0);
        let (fm, _) = pendulum_step(&params, &x, u - h, 0.0);
        for row in 0..2 {
            let fd = (fp[row] - fm[row]) / (2.0 * h);
            worst = worst.max((fd - dfdu[row]).abs() / dfdu[row].abs().max(1e-6));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(worst <= 1e-6, "worst relative gradient error {worst:.3e}");
    assert!(secs < 1.0, "runtime {secs:.2} s exceeds 1 s");
    println!("criterion 01 PASS gradient oracle: max rel error {worst:.3e} ({secs:.2} s)");
}

#[test]
fn criterion_02_interpolation_regime_exactness() {
    let start = Instant::now();
    let scenario = Scenario::default();
    // Narrow kernel keeps the 30-sample interpolation solve well conditioned;
    // the machinery under test is identical to the benchmark configuration.
    let kernel = KernelSpec::new(KernelFamily::InverseMultiquadric, 1.0).unwrap();
    let inputs = generate_excitation(&scenario.excitation, 30, scenario.seed).unwrap();
    let data = collect_dataset(
        &scenario.plant,
        &inputs,
        Vector2::zeros(),
        &DisturbanceProfile::zero(),
    )
    .unwrap();
    let (cxu, cx) = subsample_centers(&data, 1).unwrap();
    assert_eq!(cxu.len(), 30, "full center set expected");
    let bundle = build_regressors(&data, &kernel, &cxu, &cx).unwrap();
    let (model, report) = fit_velocity_model(&bundle, 0.0).unwrap();
    let rollout = validate_open_loop(&model, &data, 20).unwrap();
    let secs = start.elapsed().as_secs_f64();

    assert!(
        report.residual_x <= 1e-8,
        "state-equation residual {:.3e}",
        report.residual_x
    );
    assert!(
        report.residual_y <= 1e-8,
        "output-equation residual {:.3e}",
        report.residual_y
    );
    assert!(rollout.rmse <= 1e-6, "training rollout rmse {:.3e}", rollout.rmse);
    assert!(secs < 5.0, "runtime {secs:.2} s exceeds 5 s");
    println!(
        "criterion 02 PASS interpolation exactness: residuals {:.2e}/{:.2e}, 20-step rmse {:.2e} ({secs:.2} s)",
        report.residual_x, report.residual_y, rollout.rmse
    );
}

#[test]
fn criterion_03_validation_quality_band() {
    let start = Instant::now();
    let mut scenario = Scenario::default();
    scenario.identification.samples = 500;
    scenario.centers.stride = 2;
    let (model, _, _) = fit_from_scenario(&scenario).unwrap();
    let test = validation_dataset(&scenario, 2000).unwrap();
    let report = validate_open_loop(&model, &test, 20).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(
        report.rmse <= 0.05,
        "fresh-data 20-step rmse {:.4e} rad exceeds 0.05",
        report.rmse
    );
    assert!(secs < 60.0, "runtime {secs:.1} s exceeds 60 s");
    println!(
        "criterion 03 PASS validation band: 20-step rmse {:.3e} rad on fresh data ({secs:.1} s)",
        report.rmse
    );
}

#[test]
fn criterion_04_terminal_certificates() {
    let start = Instant::now();
    let shared = shared_fit();
    let scenario = Scenario::default();
    let dims = kdpc::model::ModelDims { n: 2, m: 1, p: 1 };
    let cfg = scenario.controller.to_config(&dims);
    let kernel_source = MatrixSource::Kernel(&shared.model);
    let analytic_source = MatrixSource::Analytic(AnalyticVelocityModel::new(scenario.plant));

    for (name, source) in [("kernel", &kernel_source), ("analytic", &analytic_source)] {
        let mut cache = TerminalCache::new();
        for y_r in [0.0, 0.5, -0.3] {
            let ti = cache.get_or_synthesize(source, &scenario, y_r).unwrap();
            let report =
                check_terminal_certificates(&ti, &cfg.q, &cfg.r, &cfg.z_set, &cfg.du_set, 40)
                    .unwrap();
            assert!(
                report.passed(),
                "{name} certificates failed at y_r = {y_r}: {:?}",
                report.failures
            );
            assert!(
                report.lyapunov_slack <= 1e-8,
                "{name} Lyapunov slack {:.3e} at y_r = {y_r}",
                report.lyapunov_slack
            );
            assert!(
                report.invariance_slack <= 1e-8,
                "{name} invariance slack {:.3e} at y_r = {y_r}",
                report.invariance_slack
            );
            assert!(report.gain_slack <= 1e-8);
            assert!(report.inclusion_slack <= 1e-8);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 30.0, "runtime {secs:.1} s exceeds 30 s");
    println!(
        "criterion 04 PASS terminal certificates for y_r in {{0, 0.5, -0.3}}, kernel and analytic ({secs:.1} s)"
    );
}

#[test]
fn criterion_05_invariant_set_grid_oracle() {
    let start = Instant::now();
    let theta = 35f64.to_radians();
    let a_cl = DMatrix::from_row_slice(
        2,
        2,
        &[
            0.9 * theta.cos(),
            -0.9 * theta.sin(),
            0.9 * theta.sin(),
            0.9 * theta.cos(),
        ],
    );
    let boxy = Polytope::box_nd(2, 1.0);
    let unconstrained = Polytope::box_nd(1, 1e9);
    let gain = DMatrix::zeros(1, 2);
    let inv = max_invariant_set(&a_cl, &gain, &boxy, &unconstrained).unwrap();

    let n_grid = 200usize;
    let cell = 2.0 / (n_grid - 1) as f64;
    let cell_diag = cell * std::f64::consts::SQRT_2;
    let mut disagreements = 0usize;
    let mut worst_boundary_dist = 0.0f64;
    for i in 0..n_grid {
        for j in 0..n_grid {
            let p = DVector::from_vec(vec![-1.0 + cell * i as f64, -1.0 + cell * j as f64]);
            // Oracle: forward orbit of length 50 stays inside the box.
            let mut v = p.clone();
            let mut stays = true;
            for _ in 0..50 {
                v = &a_cl * v;
                if !boxy.contains(&v, 1e-12) {
                    stays = false;
                    break;
                }
            }
            let ours = inv.contains(&p, 1e-12);
            if stays != ours {
                disagreements += 1;
                let boundary_dist = inv.max_violation(&p).abs();
                worst_boundary_dist = worst_boundary_dist.max(boundary_dist);
                assert!(
                    boundary_dist <= cell_diag,
                    "grid point {:?} disagrees at distance {boundary_dist:.4e} from the set boundary",
                    p.as_slice()
                );
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 30.0, "runtime {secs:.1} s exceeds 30 s");
    println!(
        "criterion 05 PASS invariant-set grid oracle: {disagreements} boundary-cell disagreements \
         on 200x200, worst offset {worst_boundary_dist:.2e} ({secs:.1} s)"
    );
}

/// Active-set enumeration oracle for small inequality-constrained QPs.
fn brute_force_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Option<f64> {
    let n = f.len();
    let m = a.nrows();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if active.len() > n {
            continue;
        }
        let na = active.len();
        let mut kkt = DMatrix::<f64>::zeros(n + na, n + na);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for (r, &i) in active.iter().enumerate() {
            for c in 0..n {
                kkt[(c, n + r)] = a[(i, c)];
                kkt[(n + r, c)] = a[(i, c)];
            }
        }
        let mut rhs = DVector::<f64>::zeros(n + na);
        for i in 0..n {
            rhs[i] = -f[i];
        }
        for (r, &i) in active.iter().enumerate() {
            rhs[n + r] = b[i];
        }
        let Some(sol) = kkt.full_piv_lu().solve(&rhs) else {
            continue;
        };
        let v = sol.rows(0, n).into_owned();
        if sol.rows(n, na).iter().any(|&l| l < -1e-9) {
            continue;
        }
        if (0..m).any(|i| a.row(i).transpose().dot(&v) > b[i] + 1e-9) {
            continue;
        }
        let obj = 0.5 * (v.transpose() * h * &v)[(0, 0)] + f.dot(&v);
        best = Some(best.map_or(obj, |cur: f64| cur.min(obj)));
    }
    best
}

#[test]
fn criterion_06_qp_active_set_oracle() {
    let start = Instant::now();
    let mut seed = 0x95eed_u64;
    let mut worst_gap = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for trial in 0..30 {
        let n = 2 + trial % 5; // 2..=6 variables
        let m = 3 + trial % 6; // 3..=8 inequality rows
        let root = DMatrix::from_fn(n, n, |_, _| xorshift(&mut seed));
        let h = &root * root.transpose() + DMatrix::identity(n, n) * 0.4;
        let f = DVector::from_fn(n, |_, _| xorshift(&mut seed));
        let a = DMatrix::from_fn(m, n, |_, _| xorshift(&mut seed));
        // Feasible by construction around a random anchor point.
        let anchor = DVector::from_fn(n, |_, _| 0.5 * xorshift(&mut seed));
        let b = &a * &anchor
            + DVector::from_fn(m, |_, _| xorshift(&mut seed).abs() + 0.1);

        let qp = QpProblem::with_inequalities(h.clone(), f.clone(), a.clone(), b.clone()).unwrap();
        let sol = solve_qp(&qp, 1e-10);
        assert_eq!(sol.status, QpStatus::Optimal, "trial {trial} not optimal");
        let oracle = brute_force_qp(&h, &f, &a, &b).expect("oracle found a minimizer");

        let gap = (sol.objective - oracle).abs();
        worst_gap = worst_gap.max(gap);
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        assert!(
            gap <= 1e-6 * (1.0 + oracle.abs()),
            "trial {trial}: objective {} vs oracle {oracle}",
            sol.objective
        );
        assert!(sol.kkt_residual <= 1e-6, "trial {trial}: KKT {:.3e}", sol.kkt_residual);
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 10.0, "runtime {secs:.1} s exceeds 10 s");
    println!(
        "criterion 06 PASS QP oracle: 30 problems, worst value gap {worst_gap:.2e}, worst KKT {worst_kkt:.2e} ({secs:.1} s)"
    );
}

fn hausdorff(a: &TerminalIngredients, b: &TerminalIngredients) -> f64 {
    let mut h = 0.0f64;
    for v in a.set.vertices().unwrap() {
        h = h.max(b.set.distance_to(&v).unwrap());
    }
    for v in b.set.vertices().unwrap() {
        h = h.max(a.set.distance_to(&v).unwrap());
    }
    h
}

#[test]
fn criterion_07_terminal_set_similarity() {
    let start = Instant::now();
    let shared = shared_fit();
    let scenario = Scenario::default();
    let kernel_source = MatrixSource::Kernel(&shared.model);
    let analytic_source = MatrixSource::Analytic(AnalyticVelocityModel::new(scenario.plant));
    let mut cache_k = TerminalCache::new();
    let mut cache_a = TerminalCache::new();
    let ti_k = cache_k.get_or_synthesize(&kernel_source, &scenario, 0.5).unwrap();
    let ti_a = cache_a.get_or_synthesize(&analytic_source, &scenario, 0.5).unwrap();

    let distance = hausdorff(&ti_k, &ti_a);
    let verts = ti_a.set.vertices().unwrap();
    let mut diameter = 0.0f64;
    for i in 0..verts.len() {
        for j in i + 1..verts.len() {
            diameter = diameter.max((&verts[i] - &verts[j]).norm());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(
        distance <= 0.1 * diameter,
        "Hausdorff {distance:.4} vs 10% of diameter {diameter:.4}"
    );
    assert!(secs < 60.0, "runtime {secs:.1} s exceeds 60 s");
    println!(
        "criterion 07 PASS terminal-set similarity: Hausdorff {distance:.4e}, {:.2}% of diameter {diameter:.3} ({secs:.1} s)",
        100.0 * distance / diameter
    );
}

#[test]
fn criterion_08_offset_free_closed_loop() {
    let start = Instant::now();
    let shared = shared_compare();
    let dims = kdpc::model::ModelDims { n: 2, m: 1, p: 1 };
    let cfg = shared.scenario.controller.to_config(&dims);

    for (name, log) in [("vkdpc", &shared.log_k), ("vnmpc", &shared.log_n)] {
        // Offset-free at the end of every constant-reference segment.
        for (start_k, end_k, y_r) in shared.scenario.reference_windows() {
            let last = &log.records[end_k - 1];
            let err = (last.y - y_r).abs();
            assert!(
                err <= 1e-3,
                "{name} segment [{start_k}, {end_k}) end error {err:.3e}"
            );
        }
        // Realized trajectories satisfy the constraint sets.
        for (i, r) in log.records.iter().enumerate() {
            let y_prev = if i == 0 { log.records[0].x2 } else { log.records[i - 1].y };
            let (dx1, dx2) = if i == 0 {
                (0.0, 0.0)
            } else {
                (r.x1 - log.records[i - 1].x1, r.x2 - log.records[i - 1].x2)
            };
            let z = DVector::from_vec(vec![y_prev, dx1, dx2]);
            assert!(
                cfg.z_set.max_violation(&z) <= 1e-6,
                "{name} step {i}: z constraint violated by {:.3e}",
                cfg.z_set.max_violation(&z)
            );
            let du = DVector::from_vec(vec![r.du]);
            assert!(
                cfg.du_set.max_violation(&du) <= 1e-6,
                "{name} step {i}: du constraint violated"
            );
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 300.0, "runtime {secs:.1} s exceeds 5 min");
    let worst_k = shared
        .metrics
        .primary
        .segment_errors
        .iter()
        .map(|e| e.final_abs_error)
        .fold(0.0, f64::max);
    println!(
        "criterion 08 PASS offset-free closed loop: worst segment-end error {worst_k:.2e} rad, all constraints met ({secs:.1} s)"
    );
}

#[test]
fn criterion_09_sqp_iteration_band() {
    let shared = shared_compare();
    for m in [&shared.metrics.primary, shared.metrics.secondary.as_ref().unwrap()] {
        assert!(
            (2.0..=10.0).contains(&m.mean_sqp_iterations),
            "{}: mean iterations {:.3} outside [2, 10]",
            m.variant,
            m.mean_sqp_iterations
        );
        assert!(m.all_converged, "{}: a step failed to converge", m.variant);
    }
    println!(
        "criterion 09 PASS SQP iteration band: means {:.3} (vkdpc) / {:.3} (vnmpc), all steps converged",
        shared.metrics.primary.mean_sqp_iterations,
        shared.metrics.secondary.as_ref().unwrap().mean_sqp_iterations
    );
}

#[test]
fn criterion_10_cross_controller_agreement() {
    let shared = shared_compare();
    let dev = shared.metrics.max_output_deviation.unwrap();
    assert!(dev <= 0.05, "max output deviation {dev:.4} rad exceeds 0.05");
    println!("criterion 10 PASS cross-controller agreement: max |y_vkdpc - y_vnmpc| = {dev:.4e} rad");
}

#[test]
fn criterion_11_value_function_decrease() {
    let shared = shared_compare();
    let vnmpc = shared.metrics.secondary.as_ref().unwrap();
    let frac_n = vnmpc.decrease_violation_fraction.unwrap_or(0.0);
    assert!(
        frac_n <= 0.05,
        "vnmpc decrease violations {:.2}% exceed 5%",
        frac_n * 100.0
    );
    let frac_k = shared.metrics.primary.decrease_violation_fraction.unwrap_or(0.0);
    println!(
        "criterion 11 PASS value-function decrease: vnmpc violations {:.2}% (gated), vkdpc {:.2}% (reported), {} steps checked",
        frac_n * 100.0,
        frac_k * 100.0,
        vnmpc.decrease_steps_checked
    );
}

#[test]
fn criterion_12_byte_identical_compare_outputs() {
    let start = Instant::now();
    // Two full pipeline executions of the same scenario, emitted without
    // timing stamps, must agree byte for byte on CSV and JSON artifacts.
    let scenario = Scenario::default();
    let run = |dir: &std::path::Path| {
        let (model, _, _) = fit_from_scenario(&scenario).unwrap();
        let log_k = run_closed_loop(&scenario, ControllerVariant::Vkdpc, Some(&model)).unwrap();
        let log_n = run_closed_loop(&scenario, ControllerVariant::Vnmpc, None).unwrap();
        let metrics = compute_metrics(&scenario, &log_k, Some(&log_n)).unwrap();
        emit_artifacts(&scenario, &[&log_k, &log_n], &metrics, dir, false).unwrap();
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run(dir_a.path());
    run(dir_b.path());

    let files = [
        "trajectories_vkdpc.csv",
        "trajectories_vnmpc.csv",
        "reports_vkdpc.jsonl",
        "reports_vnmpc.jsonl",
        "metrics.json",
    ];
    for name in files {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert!(!a.is_empty(), "{name} is empty");
        assert_eq!(a, b, "{name} differs between runs");
    }
    let secs = start.elapsed().as_secs_f64();
    println!(
        "criterion 12 PASS determinism: {} artifacts byte-identical across two pipeline runs ({secs:.1} s)",
        files.len()
    );
}

#[test]
fn criterion_13_timing_sanity() {
    let shared = shared_fit();
    let compare = shared_compare();
    assert!(
        shared.fit_seconds <= 20.0,
        "2000-sample fit took {:.2} s (> 20 s)",
        shared.fit_seconds
    );
    // Wall times measured inside the solver, available regardless of stamps.
    for m in [&compare.metrics.primary, compare.metrics.secondary.as_ref().unwrap()] {
        assert!(
            m.mean_step_ms <= 700.0,
            "{}: mean step time {:.1} ms exceeds 700 ms",
            m.variant,
            m.mean_step_ms
        );
    }
    println!(
        "criterion 13 PASS timing sanity: fit {:.2} s, mean control step {:.2} / {:.2} ms",
        shared.fit_seconds,
        compare.metrics.primary.mean_step_ms,
        compare.metrics.secondary.as_ref().unwrap().mean_step_ms
    );
}
