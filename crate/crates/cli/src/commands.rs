use std::path::Path;
use std::time::Instant;

use serde_json::json;

use mvlmn_core::checks::{self, CheckResult};
use mvlmn_core::density::{log_density, DensityWorkspace};
use mvlmn_core::mc_harness::{run_experiment, summarize};
use mvlmn_core::parallel::with_threads;
use mvlmn_core::ExperimentConfig;

use crate::args::{Cli, Command, DensityArgs, FigureArgs, SimulateArgs, VerifyArgs};
use crate::output::{self, FigureRef, Manifest, Report, KDE_FILE, MANIFEST_FILE, REPORT_FILE, SAMPLES_FILE};
use crate::{exit, figures, model_file, CliError};

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(a, cli.threads),
        Command::Verify(a) => verify_cmd(a, cli.threads),
        Command::Figure(a) => figure_cmd(a, cli.threads),
        Command::Density(a) => density_cmd(a),
    }
}

fn simulate_cmd(a: &SimulateArgs, threads: usize) -> Result<i32, CliError> {
    let (cfg, normal_column, figure) = match &a.from_manifest {
        Some(path) => {
            let m = output::read_manifest(path)?;
            (m.config, m.kde_normal_column, m.figure)
        }
        None => (config_from_args(a)?, false, None),
    };
    simulate(&cfg, normal_column, figure, &a.out, threads)?;
    Ok(exit::OK)
}

fn config_from_args(a: &SimulateArgs) -> Result<ExperimentConfig, CliError> {
    let (p, n) = match (a.p, a.n) {
        (Some(p), Some(n)) => (p, n),
        _ => return Err(CliError::Usage("--p and --n are required".into())),
    };
    let nu = checks::nu_family(a.nu.name(), a.q)?;
    let mut cfg = ExperimentConfig::new(p, n, a.q, a.nreps, a.product.into(), nu, a.seed, a.model_seed);
    if let Some(c) = a.c {
        cfg.c = c;
    }
    cfg.trace_term = a.trace_term.into();
    Ok(cfg)
}

fn figure_cmd(a: &FigureArgs, threads: usize) -> Result<i32, CliError> {
    let label = a.panel.label();
    let cfg = figures::figure_config(a.figure, label, a.nreps, a.seed, a.model_seed)?;
    let fig = FigureRef {
        figure: a.figure,
        panel: label.to_string(),
    };
    simulate(&cfg, true, Some(fig), &a.out, threads)?;
    Ok(exit::OK)
}

/// Runs one experiment and writes samples.csv, kde.csv, report.json and
/// manifest.json into `out`.
pub fn simulate(
    cfg: &ExperimentConfig,
    normal_column: bool,
    figure: Option<FigureRef>,
    out: &Path,
    threads: usize,
) -> Result<Manifest, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let set = with_threads(threads, || run_experiment(cfg))?;
    let gof = summarize(&set.standardized, &cfg.kde_grid, cfg.bandwidth_grid.as_deref())?;
    let duration = start.elapsed().as_secs_f64();
    log::info!("{} replicates in {duration:.2}s, KS {:.4}", cfg.n_reps, gof.ks_statistic);

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    output::write_file(&out.join(SAMPLES_FILE), &output::samples_csv(&set.standardized))?;
    output::write_file(&out.join(KDE_FILE), &output::kde_csv(&gof.kde, normal_column))?;
    output::write_json(&out.join(REPORT_FILE), &Report::new(&gof, cfg, duration))?;
    let manifest = Manifest {
        config: cfg.clone(),
        kde_normal_column: normal_column,
        figure,
        artifacts: [SAMPLES_FILE, KDE_FILE, REPORT_FILE].map(String::from).to_vec(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: duration,
    };
    output::write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn verify_cmd(a: &VerifyArgs, threads: usize) -> Result<i32, CliError> {
    let results: Vec<CheckResult> = with_threads(threads, || checks::run_suite(&a.suite, a.seed))?;
    let passed = results.iter().all(|r| r.passed);
    let report = json!({
        "suite": a.suite,
        "seed": a.seed,
        "passed": passed,
        "checks": results,
    });
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("{text}");
    if let Some(path) = &a.out {
        output::write_json(path, &report)?;
    }
    Ok(if passed { exit::OK } else { exit::VERIFY_FAILED })
}

fn density_cmd(a: &DensityArgs) -> Result<i32, CliError> {
    let model = model_file::load_model(&a.model)?;
    let z = model_file::read_matrix_csv(&a.data)?;
    if z.nrows() != model.p() {
        return Err(CliError::Usage(format!(
            "data has {} rows but the model has p = {}",
            z.nrows(),
            model.p()
        )));
    }
    let ws = DensityWorkspace::build_with(&model, z.ncols(), a.accuracy, a.seed)?;
    let value = log_density(&ws, &model, &z)?;
    println!("{}", json!({ "log_density": value }));
    Ok(exit::OK)
}
