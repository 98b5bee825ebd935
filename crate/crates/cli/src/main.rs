use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lsoftmax_cli::commands::{self, GradcheckRow};
use lsoftmax_cli::fetch::{self, FetchStatus};
use lsoftmax_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "lsoftmax", version, about = "Train and evaluate large-margin softmax models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download a dataset and verify its checksums.
    Fetch {
        #[arg(long, default_value = "mnist")]
        dataset: String,
        #[arg(long, default_value = "data/mnist")]
        dest: PathBuf,
        /// Base URL holding the dataset files.
        #[arg(long)]
        mirror: Option<String>,
    },
    /// Train a model described by a config file.
    Train {
        config: PathBuf,
        /// Overrides [output] directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides [optim] seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate saved parameters on the configured test split.
    Eval {
        config: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference checks of the loss gradients on random instances.
    Gradcheck {
        #[arg(long = "m", value_delimiter = ',', default_value = "1,2,3,4")]
        ms: Vec<u32>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_value = "0,1,100")]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Train with m = 1..4 and export features plus angular statistics.
    Figure1 {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = out {
        cfg.output.directory = out.to_string_lossy().into_owned();
    }
    if let Some(seed) = seed {
        cfg.optim.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Fetch { dataset, dest, mirror } => {
            for o in fetch::cmd_fetch(&dataset, mirror.as_deref(), &dest)? {
                let what = match o.status {
                    FetchStatus::Present => "ok (already present)",
                    FetchStatus::Downloaded => "downloaded",
                    FetchStatus::Replaced => "re-downloaded",
                };
                println!("{}: {what}", o.path.display());
            }
        }
        Command::Train { config, out, seed } => {
            let cfg = load(&config, out, seed)?;
            let r = commands::cmd_train(&cfg)?;
            if let Some(last) = r.metrics.last() {
                println!("iterations: {}  final train loss: {:.6}", r.metrics.len(), last.train_loss);
            }
            if let Some(acc) = r.test_accuracy {
                println!("test accuracy: {acc:.4}");
            }
            println!("artifacts: {}", r.output_dir.display());
        }
        Command::Eval { config, params, out } => {
            let cfg = load(&config, out, None)?;
            let r = commands::cmd_eval(&cfg, &params)?;
            println!("accuracy: {:.4}", r.accuracy);
            println!(
                "margin_proxy: {:.6}  mean angular spread: {:.6}  min inter-class angle: {:.6}",
                r.stats.margin_proxy,
                r.stats.mean_spread(),
                r.stats.min_interclass_angle
            );
            if let Some(v) = r.verification {
                println!(
                    "verification accuracy: {:.4} at threshold {:.3}",
                    v.best_accuracy, v.best_threshold
                );
            }
        }
        Command::Gradcheck {
            ms,
            seeds,
            lambdas,
            tolerance,
        } => {
            let rows = commands::cmd_gradcheck(&ms, seeds, &lambdas, tolerance)?;
            println!("{:>2} {:>5} {:>8} {:>12} {:>12}  result", "m", "seed", "lambda", "err grad_X", "err grad_W");
            for GradcheckRow {
                m,
                seed,
                lambda,
                error_features,
                error_weights,
                passed,
            } in &rows
            {
                println!(
                    "{m:>2} {seed:>5} {lambda:>8} {error_features:>12.3e} {error_weights:>12.3e}  {}",
                    if *passed { "pass" } else { "FAIL" }
                );
            }
            let ok = rows.iter().all(|r| r.passed);
            println!("{} of {} configurations passed (tolerance {tolerance:e})", rows.iter().filter(|r| r.passed).count(), rows.len());
            return Ok(ok);
        }
        Command::Figure1 { config, out, seed } => {
            let cfg = load(&config, out, seed)?;
            let rows = commands::cmd_figure1(&cfg)?;
            println!("{:>2} {:>10} {:>13} {:>12} {:>9}", "m", "test acc", "margin_proxy", "mean spread", "min angle");
            for r in &rows {
                println!(
                    "{:>2} {:>10.4} {:>13.6} {:>12.6} {:>9.4}",
                    r.m, r.test_accuracy, r.margin_proxy, r.mean_spread, r.min_interclass_angle
                );
            }
            println!("artifacts: {}", cfg.output.directory);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
