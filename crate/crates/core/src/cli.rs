//! The `arcbo` command line: JSON configs in, CSV/JSON artifacts out.
//!
//! Exit codes: 0 success, 1 failed property or run, 2 usage or config error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::bench::{run_bo_experiment, run_regression_experiment, BoArm, ExperimentConfig};
use crate::bo::sobol_grid;
use crate::checks::{run_kernel_checks, CheckConfig};
use crate::error::{Error, Result};

const DEFAULT_CHECK: &str = include_str!("../configs/check_kernel.json");
const DEFAULT_REGRESS: &str = include_str!("../configs/regress.json");
const DEFAULT_OPTIMIZE: &str = include_str!("../configs/optimize.json");
const DEFAULT_SOBOL: &str = include_str!("../configs/sobol.json");

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "arcbo",
    version,
    about = "Arc-kernel Bayesian optimization toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the kernel property suite.
    CheckKernel(CommonArgs),
    /// Cross-validated regression comparison; writes nmse.csv.
    Regress(CommonArgs),
    /// Optimization runs; writes trajectories.csv and architectures.csv.
    Optimize(CommonArgs),
    /// Write Sobol grid points to sobol.csv.
    SobolDump(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config; the bundled default is used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Overrides the config's seed(s).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite existing result files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SobolConfig {
    dimension: usize,
    count: usize,
    #[serde(default)]
    scramble: bool,
    #[serde(default)]
    seed: u64,
}

/// Failure of a command, split by exit code.
enum Failure {
    Config(Error),
    Run(Error),
    Properties,
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Run(_) | Failure::Properties => EXIT_FAILURE,
        }
    }
}

fn load(args: &CommonArgs, default: &str) -> std::result::Result<String, Failure> {
    match &args.config {
        Some(path) => fs::read_to_string(path).map_err(|e| Failure::Config(Error::Io(e))),
        None => Ok(default.to_string()),
    }
}

/// Creates the output directory and refuses to clobber existing files
/// unless `--force` is given.
fn prepare_outputs(
    args: &CommonArgs,
    names: &[&str],
) -> std::result::Result<Vec<PathBuf>, Failure> {
    let paths: Vec<PathBuf> = names.iter().map(|n| args.out.join(n)).collect();
    if !args.force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Failure::Config(Error::Config(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            ))));
        }
    }
    fs::create_dir_all(&args.out).map_err(|e| Failure::Run(Error::Io(e)))?;
    Ok(paths)
}

fn write_file(
    path: &Path,
    render: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> std::result::Result<(), Failure> {
    let mut buf = Vec::new();
    render(&mut buf).map_err(Failure::Run)?;
    fs::write(path, buf).map_err(|e| Failure::Run(Error::Io(e)))
}

fn check_kernel(args: &CommonArgs, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let mut cfg = CheckConfig::from_json(&load(args, DEFAULT_CHECK)?).map_err(Failure::Config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let paths = prepare_outputs(args, &["check_kernel.json"])?;
    let report = run_kernel_checks(&cfg);
    let _ = write!(out, "{}", report.to_text());
    write_file(&paths[0], |b| {
        b.extend_from_slice(report.to_json().as_bytes());
        Ok(())
    })?;
    if report.all_passed() {
        let _ = writeln!(out, "all {} properties passed", report.properties.len());
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|p| p.name).collect();
        let _ = writeln!(out, "failed properties: {}", names.join(", "));
        Err(Failure::Properties)
    }
}

fn experiment_config(
    args: &CommonArgs,
    default: &str,
) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_json(&load(args, default)?).map_err(Failure::Config)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn regress(args: &CommonArgs, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let cfg = experiment_config(args, DEFAULT_REGRESS)?;
    let paths = prepare_outputs(args, &["nmse.csv"])?;
    let res = run_regression_experiment(&cfg).map_err(Failure::Run)?;
    write_file(&paths[0], |b| res.write_csv(b))?;
    let _ = writeln!(
        out,
        "{:<22} {:>10} {:>10} {:>6}",
        "model", "mean_nmse", "sd", "folds"
    );
    for s in res.summary() {
        let _ = writeln!(
            out,
            "{:<22} {:>10.5} {:>10.5} {:>6}",
            s.model.name(),
            s.mean,
            s.sd,
            s.folds
        );
    }
    Ok(())
}

fn optimize(args: &CommonArgs, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let cfg = experiment_config(args, DEFAULT_OPTIMIZE)?;
    let paths = prepare_outputs(args, &["trajectories.csv", "architectures.csv"])?;
    let res = run_bo_experiment(&cfg).map_err(Failure::Run)?;
    write_file(&paths[0], |b| res.write_trajectories_csv(b))?;
    write_file(&paths[1], |b| res.write_architectures_csv(b))?;
    let _ = writeln!(
        out,
        "{:<22} {:>16} {:>12}",
        "model", "median_final", "depth>=3"
    );
    for arm in BoArm::ALL.into_iter().filter(|a| cfg.arms.contains(a)) {
        let median = res.median_final_incumbent(arm).unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{:<22} {:>16.5} {:>12.3}",
            arm.name(),
            median,
            res.deep_fraction(arm, 3)
        );
    }
    Ok(())
}

fn sobol_dump(args: &CommonArgs, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let mut cfg: SobolConfig =
        serde_json::from_str(&load(args, DEFAULT_SOBOL)?).map_err(|e| Failure::Config(e.into()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let grid = sobol_grid(cfg.dimension, cfg.count, cfg.scramble.then_some(cfg.seed))
        .map_err(Failure::Config)?;
    let paths = prepare_outputs(args, &["sobol.csv"])?;
    write_file(&paths[0], |b| {
        let mut w = csv::Writer::from_writer(b);
        let header: Vec<String> = (0..cfg.dimension).map(|j| format!("u{j}")).collect();
        w.write_record(&header)?;
        for row in &grid {
            w.write_record(row.iter().map(|u| u.to_string()))?;
        }
        w.flush()?;
        Ok(())
    })?;
    let _ = writeln!(
        out,
        "wrote {} points of dimension {}",
        grid.len(),
        cfg.dimension
    );
    Ok(())
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::CheckKernel(a) => check_kernel(a, out),
        Command::Regress(a) => regress(a, out),
        Command::Optimize(a) => optimize(a, out),
        Command::SobolDump(a) => sobol_dump(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            match &f {
                Failure::Config(e) => {
                    let _ = writeln!(err, "config error: {e}");
                }
                Failure::Run(e) => {
                    let _ = writeln!(err, "error: {e}");
                }
                Failure::Properties => {}
            }
            f.code()
        }
    }
}
