//! Command-line harness: data generation, model fitting, validation,
//! terminal-set synthesis and closed-loop benchmark runs, all driven by one
//! scenario TOML file.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on solver failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kdpc::analytic::AnalyticVelocityModel;
use kdpc::harness::{
    compute_metrics, emit_artifacts, emit_terminal, emit_validation, fit_from_scenario,
    identification_dataset, run_closed_loop, validation_dataset, ControllerVariant, HarnessError,
    MatrixSource, Scenario, TerminalCache,
};
use kdpc::model::{validate_open_loop, VelocityKernelModel};
use kdpc::terminal::check_terminal_certificates;

#[derive(Parser)]
#[command(
    name = "kdpc",
    about = "Kernelized velocity-form identification and offset-free predictive control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario TOML file; defaults apply when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the closed-loop duration (steps).
    #[arg(long)]
    duration: Option<usize>,
    /// Override the identification sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Override the center subsampling stride.
    #[arg(long)]
    stride: Option<usize>,
    /// Embed measured wall times in emitted files (breaks byte-for-byte
    /// reproducibility).
    #[arg(long)]
    stamp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the identification dataset and write it as CSV.
    GenerateData(CommonArgs),
    /// Fit the kernelized velocity model and write model.json.
    Fit(CommonArgs),
    /// Multi-step open-loop validation on fresh excitation data.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Load a fitted model instead of refitting.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Prediction horizon for the rollouts.
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        /// Length of the fresh validation record.
        #[arg(long, default_value_t = 2000)]
        test_samples: usize,
    },
    /// Synthesize terminal ingredients and export the set.
    Terminal {
        #[command(flatten)]
        common: CommonArgs,
        /// Output reference the ingredients are built for.
        #[arg(long, default_value_t = 0.5)]
        reference: f64,
        /// Load a fitted model instead of refitting.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Closed-loop run with one controller variant.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Controller variant: vkdpc or vnmpc.
        #[arg(long, default_value = "vkdpc")]
        variant: String,
        /// Load a fitted model instead of refitting (vkdpc only).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run both controllers on the same plant and disturbance realization.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Load a fitted model instead of refitting.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn load_scenario(common: &CommonArgs) -> Result<Scenario, HarnessError> {
    let mut scenario = match &common.scenario {
        Some(path) => Scenario::load(path)?,
        None => Scenario::default(),
    };
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    if let Some(duration) = common.duration {
        scenario.duration = duration;
    }
    if let Some(samples) = common.samples {
        scenario.identification.samples = samples;
    }
    if let Some(stride) = common.stride {
        scenario.centers.stride = stride;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn ensure_out(common: &CommonArgs) -> Result<(), HarnessError> {
    std::fs::create_dir_all(&common.out)
        .map_err(|e| HarnessError::Artifact(format!("cannot create {}: {e}", common.out.display())))
}

fn obtain_model(
    scenario: &Scenario,
    model_path: &Option<PathBuf>,
) -> Result<VelocityKernelModel, HarnessError> {
    match model_path {
        Some(path) => Ok(VelocityKernelModel::load_json(path)?),
        None => {
            let (model, report, _) = fit_from_scenario(scenario)?;
            if !report.full_rank_x || !report.full_rank_y {
                eprintln!(
                    "note: regressor stacks are numerically rank deficient \
                     (rank_x {}, rank_y {}); the min-norm fit is still well defined",
                    report.rank_x, report.rank_y
                );
            }
            Ok(model)
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::GenerateData(common) => {
            let scenario = load_scenario(&common)?;
            ensure_out(&common)?;
            let data = identification_dataset(&scenario)?;
            let path = common.out.join("dataset.csv");
            data.save_csv(&path)?;
            println!(
                "wrote {} ({} samples)",
                path.display(),
                data.num_transitions()
            );
            Ok(())
        }
        Command::Fit(common) => {
            let scenario = load_scenario(&common)?;
            ensure_out(&common)?;
            let (model, report, _) = fit_from_scenario(&scenario)?;
            let model_path = common.out.join("model.json");
            model.save_json(&model_path)?;
            let report_path = common.out.join("fit_report.json");
            std::fs::write(
                &report_path,
                serde_json::to_string_pretty(&report)
                    .map_err(|e| HarnessError::Artifact(e.to_string()))?,
            )
            .map_err(|e| HarnessError::Artifact(e.to_string()))?;
            println!(
                "wrote {} ({} centers, training residuals {:.3e} / {:.3e})",
                model_path.display(),
                model.num_centers(),
                report.residual_x,
                report.residual_y
            );
            Ok(())
        }
        Command::Validate {
            common,
            model,
            horizon,
            test_samples,
        } => {
            let scenario = load_scenario(&common)?;
            ensure_out(&common)?;
            let model = obtain_model(&scenario, &model)?;
            let data = validation_dataset(&scenario, test_samples)?;
            let report = validate_open_loop(&model, &data, horizon)?;
            let paths = emit_validation(&scenario, &report, &common.out)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            println!("{horizon}-step open-loop rmse: {:.6e} rad", report.rmse);
            Ok(())
        }
        Command::Terminal {
            common,
            reference,
            model,
        } => {
            let scenario = load_scenario(&common)?;
            ensure_out(&common)?;
            let model = obtain_model(&scenario, &model)?;
            let kernel_source = MatrixSource::Kernel(&model);
            let analytic_source =
                MatrixSource::Analytic(AnalyticVelocityModel::new(scenario.plant));
            let mut cache_k = TerminalCache::new();
            let mut cache_a = TerminalCache::new();
            let ti_k = cache_k.get_or_synthesize(&kernel_source, &scenario, reference)?;
            let ti_a = cache_a.get_or_synthesize(&analytic_source, &scenario, reference)?;

            let dims = kdpc::model::VelocityMatrixSource::dims(&kernel_source);
            let cfg = scenario.controller.to_config(&dims);
            for (name, ti) in [("kernel", &ti_k), ("analytic", &ti_a)] {
                let report =
                    check_terminal_certificates(ti, &cfg.q, &cfg.r, &cfg.z_set, &cfg.du_set, 50)?;
                println!(
                    "{name} ingredients at y_r = {reference}: {} rows, certificates {} \
                     (Lyapunov slack {:.2e}, invariance slack {:.2e})",
                    ti.set.num_rows(),
                    if report.passed() { "pass" } else { "FAIL" },
                    report.lyapunov_slack,
                    report.invariance_slack,
                );
                for failure in &report.failures {
                    eprintln!("  {failure}");
                }
            }
            let paths = emit_terminal(&ti_k, "kernel model", Some((&*ti_a, "analytic model")), &common.out)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Simulate {
            common,
            variant,
            model,
        } => {
            let scenario = load_scenario(&common)?;
            ensure_out(&common)?;
            let variant: ControllerVariant = variant.parse()?;
            let log = match variant {
                ControllerVariant::Vkdpc => {
                    let model = obtain_model(&scenario, &model)?;
                    run_closed_loop(&scenario, variant, Some(&model))?
                }
                ControllerVariant::Vnmpc => run_closed_loop(&scenario, variant, None)?,
            };
            let metrics = compute_metrics(&scenario, &log, None)?;
            let paths = emit_artifacts(&scenario, &[&log], &metrics, &common.out, common.stamp)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            print_summary(&metrics);
            Ok(())
        }
        Command::Compare { common, model } => {
            let scenario = load_scenario(&common)?;
            ensure_out(&common)?;
            let model = obtain_model(&scenario, &model)?;
            let log_k = run_closed_loop(&scenario, ControllerVariant::Vkdpc, Some(&model))?;
            let log_n = run_closed_loop(&scenario, ControllerVariant::Vnmpc, None)?;
            let metrics = compute_metrics(&scenario, &log_k, Some(&log_n))?;
            let paths = emit_artifacts(
                &scenario,
                &[&log_k, &log_n],
                &metrics,
                &common.out,
                common.stamp,
            )?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            print_summary(&metrics);
            Ok(())
        }
    }
}

fn print_summary(metrics: &kdpc::harness::Metrics) {
    let mut variants = vec![&metrics.primary];
    if let Some(sec) = &metrics.secondary {
        variants.push(sec);
    }
    for v in variants {
        println!(
            "{}: mean SQP iterations {:.3} (max {}), all converged: {}",
            v.variant, v.mean_sqp_iterations, v.max_sqp_iterations, v.all_converged
        );
        for e in &v.segment_errors {
            println!(
                "  segment [{}, {}) y_r = {}: final |y - y_r| = {:.3e}",
                e.start, e.end, e.y_r, e.final_abs_error
            );
        }
        if let Some(frac) = v.decrease_violation_fraction {
            println!(
                "  value-function decrease violations: {:.2}% over {} steps",
                frac * 100.0,
                v.decrease_steps_checked
            );
        }
        if v.scheduled_lyapunov_slack.is_finite() {
            println!(
                "  worst scheduled Lyapunov slack: {:.3e}",
                v.scheduled_lyapunov_slack
            );
        }
    }
    if let Some(dev) = metrics.max_output_deviation {
        println!("max output deviation between controllers: {dev:.4e} rad");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(inner) = source {
                eprintln!("  caused by: {inner}");
                source = inner.source();
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
