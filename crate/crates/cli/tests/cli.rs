//! End-to-end checks of the `kdpc` binary: every verb runs, artifacts land
//! where expected, outputs are byte-reproducible, and failures map to the
//! documented exit codes.

use std::path::Path;
use std::process::Command;

fn kdpc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kdpc"))
}

fn write_short_scenario(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("short.toml");
    std::fs::write(
        &path,
        r#"
seed = 3
duration = 60

[identification]
samples = 150

[centers]
stride = 2

[[references]]
start = 0
value = 0.25

[[disturbance]]
start = 0
value = 0.0

[[disturbance]]
start = 30
value = 0.08
"#,
    )
    .unwrap();
    path
}

#[test]
fn pipeline_verbs_produce_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_short_scenario(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let scen_s = scenario.to_str().unwrap();

    let run = |args: &[&str]| {
        let output = kdpc().args(args).output().unwrap();
        assert!(
            output.status.success(),
            "kdpc {:?} failed:\n{}",
            args,
            String::from_utf8_lossy(&output.stderr)
        );
        output
    };

    run(&["generate-data", "--scenario", scen_s, "--out", out_s]);
    let dataset = std::fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert!(dataset.starts_with("k,x1,x2,u,y,d"));

    run(&["fit", "--scenario", scen_s, "--out", out_s]);
    let model_path = out.join("model.json");
    assert!(model_path.exists());
    assert!(out.join("fit_report.json").exists());
    let model_s = model_path.to_str().unwrap().to_string();

    run(&[
        "validate",
        "--scenario",
        scen_s,
        "--out",
        out_s,
        "--model",
        &model_s,
        "--test-samples",
        "200",
    ]);
    let validation = std::fs::read_to_string(out.join("validation.csv")).unwrap();
    assert!(validation.starts_with("k,y,y_hat,e"));
    assert!(out.join("validation.svg").exists());

    run(&[
        "terminal",
        "--scenario",
        scen_s,
        "--out",
        out_s,
        "--model",
        &model_s,
        "--reference",
        "0.25",
    ]);
    let halfspaces = std::fs::read_to_string(out.join("terminal_set.csv")).unwrap();
    assert!(halfspaces.starts_with("a1,a2,a3,b"));
    assert!(out.join("terminal_vertices.csv").exists());
    assert!(out.join("terminal_set.svg").exists());

    run(&[
        "simulate",
        "--scenario",
        scen_s,
        "--out",
        out_s,
        "--variant",
        "vnmpc",
    ]);
    let traj = std::fs::read_to_string(out.join("trajectories_vnmpc.csv")).unwrap();
    assert!(traj.starts_with("k,x1,x2,u,du,y,yr,d,V,iters,ms"));
    assert_eq!(traj.lines().count(), 61);
    assert!(out.join("reports_vnmpc.jsonl").exists());
    assert!(out.join("metrics.json").exists());
    assert!(out.join("closedloop.svg").exists());
}

#[test]
fn compare_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_short_scenario(dir.path());
    let scen_s = scenario.to_str().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    for out in [&out_a, &out_b] {
        let output = kdpc()
            .args([
                "compare",
                "--scenario",
                scen_s,
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "compare failed:\n{}",
            String::from_utf8_lossy(&output.stderr)
        );
    }

    for name in [
        "trajectories_vkdpc.csv",
        "trajectories_vnmpc.csv",
        "reports_vkdpc.jsonl",
        "reports_vnmpc.jsonl",
        "metrics.json",
        "closedloop.svg",
    ] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "duration = 10\n[[references]]\nstart = 99\nvalue = 0.1\n").unwrap();
    let output = kdpc()
        .args([
            "simulate",
            "--scenario",
            bad.to_str().unwrap(),
            "--variant",
            "vnmpc",
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn solver_failures_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    // Increment bounds too tight to reach the reference within the horizon
    // make the hard terminal constraint infeasible on the very first step.
    let infeasible = dir.path().join("infeasible.toml");
    std::fs::write(
        &infeasible,
        r#"
duration = 10

[controller]
du_bound = 0.0003

[[references]]
start = 0
value = 0.5
"#,
    )
    .unwrap();
    let output = kdpc()
        .args([
            "simulate",
            "--scenario",
            infeasible.to_str().unwrap(),
            "--variant",
            "vnmpc",
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("step"), "stderr should name the failing step: {stderr}");
}
