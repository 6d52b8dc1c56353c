//! Command-line front end for the proprioception toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use proprio::calibration::CalibrationSet;
use proprio::config::RunConfig;
use proprio::drift::DriftCorrector;
use proprio::error::{Error, Result};
use proprio::eval::compare_methods;
use proprio::fusion::{run_method, FusionConfigs, MethodKind};
use proprio::logio;
use proprio::pipeline::{self, fit_arm_calibration, write_manifest};
use proprio::sim::{run_scenario, ScenarioKind, ScenarioSpec, SensorRig};
use proprio::tuner::{tune, ObjectiveContext, ParamMode};

#[derive(Parser)]
#[command(
    name = "proprio",
    version,
    about = "Simulate, calibrate, tune, and evaluate planar soft-robot proprioception"
)]
struct Cli {
    /// Experiment configuration JSON (all fields optional).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for tuning and evaluation (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario's sensor and ground-truth logs.
    Simulate(SimulateArgs),
    /// Fit bend-sensor calibration maps from a logged run.
    Calibrate(CalibrateArgs),
    /// Tune the fusion filter parameters on a training log.
    Tune(TuneArgs),
    /// Run one estimator over a sensor log.
    Estimate(EstimateArgs),
    /// Compare all estimator variants against ground truth.
    Evaluate(EvaluateArgs),
    /// Full pipeline: simulate, calibrate, tune, validate, evaluate.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario kind: I, II, or III.
    #[arg(long, value_parser = parse_scenario)]
    scenario: ScenarioKind,
    /// Duration in seconds.
    #[arg(long, default_value_t = 900.0)]
    duration: f64,
    /// Sample rate in Hz.
    #[arg(long)]
    rate: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Base name of the emitted files.
    #[arg(long, default_value = "run")]
    name: String,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Sensor log CSV.
    #[arg(long)]
    sensor: PathBuf,
    /// Ground-truth log CSV.
    #[arg(long)]
    gt: PathBuf,
    /// Run metadata JSON.
    #[arg(long)]
    meta: PathBuf,
    /// Output calibration JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    sensor: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Calibration JSON from `calibrate`.
    #[arg(long)]
    cal: PathBuf,
    /// Output directory for the tuned configs and report.
    #[arg(long)]
    out: PathBuf,
    /// Initial descent step.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Convergence tolerance on the objective decrease.
    #[arg(long)]
    tol: Option<f64>,
    /// Parameterization: scalar (per-block) or diagonal.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ParamMode>,
    /// Also tune the measurement-matrix block scales.
    #[arg(long, default_value_t = false)]
    tune_h: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    sensor: PathBuf,
    #[arg(long)]
    cal: PathBuf,
    /// Directory holding kf_orient.json / kf_coord.json (fusion only).
    #[arg(long)]
    kf: Option<PathBuf>,
    /// Estimator: fusion, bend, imu_c, or imu_o.
    #[arg(long, default_value = "fusion", value_parser = parse_method)]
    method: MethodKind,
    /// Output estimates CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    sensor: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    cal: PathBuf,
    #[arg(long)]
    kf: PathBuf,
    /// Output directory for results and plot data.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_scenario(s: &str) -> std::result::Result<ScenarioKind, String> {
    s.parse::<ScenarioKind>().map_err(|e| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<MethodKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "fusion" => Ok(MethodKind::Fusion),
        "bend" => Ok(MethodKind::Bend),
        "imu_c" | "imuc" => Ok(MethodKind::ImuCorrected),
        "imu_o" | "imuo" | "imu" => Ok(MethodKind::ImuRaw),
        other => Err(format!(
            "unknown method {other:?} (expected fusion, bend, imu_c, or imu_o)"
        )),
    }
}

fn parse_mode(s: &str) -> std::result::Result<ParamMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "scalar" | "block" => Ok(ParamMode::BlockScalars),
        "diagonal" | "diag" => Ok(ParamMode::Diagonal),
        other => Err(format!("unknown mode {other:?} (expected scalar or diagonal)")),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn corrector_from(config: &RunConfig) -> Result<DriftCorrector> {
    DriftCorrector::new(config.drift_window, config.drift_threshold_rad())
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs > 0 {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    let config = load_config(&cli)?;

    match &cli.command {
        Command::Simulate(args) => {
            let (geoms, noise) = config.resolve()?;
            let rig = SensorRig::generate(config.rig_seed, geoms.len());
            let spec = ScenarioSpec::new(
                args.scenario,
                args.duration,
                args.rate.unwrap_or(config.sample_rate_hz),
                config.seed,
            )?;
            let run = run_scenario(&spec, &geoms, &noise.imu, &noise.bend, &rig)?;
            let (s, g, m) = logio::save_run(
                &args.out,
                &args.name,
                &run,
                config.rig_seed,
                &noise.imu,
                &noise.bend,
            )?;
            write_manifest(&args.out, &config, &[s.clone(), g.clone(), m.clone()])?;
            println!("wrote {}", s.display());
            println!("wrote {}", g.display());
            println!("wrote {}", m.display());
        }
        Command::Calibrate(args) => {
            let (run, _) = logio::load_run(&args.sensor, &args.gt, &args.meta)?;
            let cal = fit_arm_calibration(&run)?;
            cal.save(&args.out)?;
            let mean_rmse = cal.maps.iter().map(|m| m.fit_rmse).sum::<f64>()
                / cal.maps.len() as f64;
            println!(
                "wrote {} ({} maps, mean fit RMSE {:.3} deg)",
                args.out.display(),
                cal.len(),
                mean_rmse.to_degrees()
            );
        }
        Command::Tune(args) => {
            let (geoms, noise) = config.resolve()?;
            let (run, _) = logio::load_run(&args.sensor, &args.gt, &args.meta)?;
            let cal = CalibrationSet::load(&args.cal)?;
            let corrector = corrector_from(&config)?;
            let mut spec = config.tuner;
            if let Some(lr) = args.lr {
                spec.learning_rate = lr;
            }
            if let Some(n) = args.max_iters {
                spec.max_iters = n;
            }
            if let Some(tol) = args.tol {
                spec.convergence_tol = tol;
            }
            if let Some(mode) = args.mode {
                spec.mode = mode;
            }
            spec.tune_h = spec.tune_h || args.tune_h;
            let initial = FusionConfigs::from_noise_models(
                &geoms,
                &cal,
                &noise.imu,
                &noise.bend,
                config.drift_window as f64 / config.sample_rate_hz,
            );
            let ctx = ObjectiveContext {
                geoms: &geoms,
                cal: &cal,
                corrector: &corrector,
                run: &run,
            };
            let report = tune(&spec, &initial, &ctx)?;
            std::fs::create_dir_all(&args.out)?;
            let configs = report.configs.clone().expect("tuner returns configs");
            let (p1, p2) = configs.save(&args.out)?;
            let report_path = args.out.join("tuner_report.json");
            std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
            write_manifest(&args.out, &config, &[p1, p2, report_path])?;
            println!(
                "tuned in {} iterations (converged: {}): objective {:.3} -> {:.3}",
                report.iterations,
                report.converged,
                report.initial().objective,
                report.last().objective
            );
        }
        Command::Estimate(args) => {
            let (geoms, _) = config.resolve()?;
            let frames = logio::read_sensor_csv(&args.sensor)?;
            let cal = CalibrationSet::load(&args.cal)?;
            let configs = match &args.kf {
                Some(dir) => Some(FusionConfigs::load(dir)?),
                None => None,
            };
            if args.method == MethodKind::Fusion && configs.is_none() {
                return Err(Error::InvalidInput(
                    "--kf is required for the fusion method".into(),
                ));
            }
            let corrector = corrector_from(&config)?;
            let estimates = run_method(
                args.method,
                &frames,
                &geoms,
                &cal,
                configs.as_ref(),
                &corrector,
            )?;
            logio::write_estimates_csv(&args.out, &estimates)?;
            println!("wrote {} ({} frames)", args.out.display(), estimates.len());
        }
        Command::Evaluate(args) => {
            let (geoms, _) = config.resolve()?;
            let (run, _) = logio::load_run(&args.sensor, &args.gt, &args.meta)?;
            let cal = CalibrationSet::load(&args.cal)?;
            let configs = FusionConfigs::load(&args.kf)?;
            let corrector = corrector_from(&config)?;
            let table = compare_methods(&[run], &geoms, &cal, &configs, &corrector)?;
            std::fs::create_dir_all(&args.out)?;
            let csv = args.out.join("results.csv");
            logio::write_results_csv(&csv, &table)?;
            let json = args.out.join("results.json");
            std::fs::write(&json, serde_json::to_string_pretty(&table)?)?;
            let plot = args.out.join("plot_data.csv");
            logio::write_plot_data_csv(&plot, &table)?;
            write_manifest(&args.out, &config, &[csv, json, plot])?;
            for row in &table.rows {
                println!(
                    "{:7} {:6} rmse {:8.3} mm ({:5.2}%)",
                    row.method.label(),
                    row.scenario,
                    row.rmse_mm,
                    row.rmse_pct
                );
            }
        }
        Command::Reproduce(args) => {
            let report = pipeline::reproduce(&config, &args.out)?;
            println!("results in {}", report.out_dir.display());
            for row in &report.table.rows {
                println!(
                    "{:7} {:6} rmse {:8.3} mm ({:5.2}%)",
                    row.method.label(),
                    row.scenario,
                    row.rmse_mm,
                    row.rmse_pct
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
