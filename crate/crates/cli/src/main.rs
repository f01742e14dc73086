use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use slowfast::catalog;
use slowfast_cli::report::{write_outputs, Summary, CSV_FILE};
use slowfast_cli::{exit, run_experiment, Experiment, ExperimentConfig, Suite};

#[derive(Parser)]
#[command(name = "slowfast", version, about = "Averaging and normal-form experiments for slow-fast Hamiltonian systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured suites and write results.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides output_path from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated suites; overrides the config.
        #[arg(long, value_delimiter = ',')]
        suites: Option<Vec<Suite>>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// List the built-in systems and their default parameters.
    ListSystems,
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path) -> Result<Experiment, ExitCode> {
    ExperimentConfig::load(path).and_then(ExperimentConfig::validate).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(exit::CONFIG)
    })
}

fn run(config: PathBuf, out: Option<PathBuf>, suites: Option<Vec<Suite>>, jobs: Option<usize>) -> ExitCode {
    let exp = match load(&config) {
        Ok(e) => e,
        Err(code) => return code,
    };
    if let Some(s) = &suites {
        let mut sorted = s.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != s.len() {
            eprintln!("error: --suites repeats a suite");
            return ExitCode::from(exit::CONFIG);
        }
        if s.contains(&Suite::Oracle) && exp.system.quadratic().is_none() {
            eprintln!("error: the oracle suite needs a quadratic system; {} is not", exp.config.system_id);
            return ExitCode::from(exit::CONFIG);
        }
    }
    if jobs == Some(0) {
        eprintln!("error: --jobs must be positive");
        return ExitCode::from(exit::CONFIG);
    }
    let dir = out.unwrap_or_else(|| exp.config.output_path.clone());

    let start = Instant::now();
    let rows = run_experiment(&exp, suites.as_deref(), jobs);
    let summary = Summary::from_rows(&exp.config.system_id, &rows, dir.join(CSV_FILE), start.elapsed().as_secs_f64() * 1e3);
    if let Err(e) = write_outputs(&dir, &rows, &summary) {
        eprintln!("error: cannot write results to {}: {e}", dir.display());
        return ExitCode::from(exit::CONFIG);
    }

    for (suite, s) in &summary.suites {
        let worst = s
            .worst_residual
            .as_ref()
            .map(|w| format!(", worst {} = {:.2e} (tol {:.0e})", w.check_id, w.value, w.tolerance))
            .unwrap_or_default();
        println!("{suite}: {}/{} passed{worst}", s.passed, s.rows);
    }
    for s in &summary.slopes {
        println!("point {}: slope J {:?}, slope F {:?}", s.point_index, s.slope_j, s.slope_f);
    }
    println!("{} rows, {} failed -> {}", summary.rows, summary.failed, dir.display());
    ExitCode::from(if summary.all_pass { exit::PASS } else { exit::FAIL })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, out, suites, jobs } => run(config, out, suites, jobs),
        Command::ListSystems => {
            for s in catalog::list() {
                let params: Vec<String> = s.defaults.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let kind = if s.quadratic { "quadratic" } else { "general" };
                println!("{:<12} {:<10} {:<40} {}", s.id, kind, params.join(" "), s.description);
            }
            ExitCode::from(exit::PASS)
        }
        Command::Validate { config } => match load(&config) {
            Ok(exp) => {
                println!(
                    "ok: {} with {} points, suites {:?}",
                    exp.config.system_id,
                    exp.points.len(),
                    exp.config.suites.iter().map(|s| s.as_str()).collect::<Vec<_>>()
                );
                ExitCode::from(exit::PASS)
            }
            Err(code) => code,
        },
    }
}
