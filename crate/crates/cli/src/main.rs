//! `tmkd`: preprocessing, synthetic data, teacher pretraining, distillation, evaluation
//! and gradient checks from one binary.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input or contract error, 3 numeric divergence.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "tmkd", version, about = "Text-guided multi-view knowledge distillation on toy models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration shared by every subcommand that reads a run config.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.lr=0.05`. Repeatable; applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory holding `<run-name>/` outputs.
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    #[arg(long)]
    run_name: String,
    /// Dataset directory written by `synth`; overrides `data.dir`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Ablation {
    #[arg(long)]
    no_edge: bool,
    #[arg(long)]
    no_hf: bool,
    #[arg(long)]
    no_feat: bool,
    #[arg(long)]
    no_crd: bool,
    /// Add ground-truth cross-entropy to the objective.
    #[arg(long)]
    with_ce: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the edge and high-frequency views of every `.ppm` in a directory.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        alpha_e: Option<f64>,
        #[arg(long)]
        alpha_hf: Option<f64>,
        #[arg(long)]
        canny_low: Option<f64>,
        #[arg(long)]
        canny_high: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        kernel: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the synthetic dataset described by `synth.*`.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train a teacher with cross-entropy on the RGB view.
    Pretrain {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Distill a student from a teacher (pretrained on the fly unless given).
    Distill {
        #[command(flatten)]
        run: RunArgs,
        /// TMKD-EMB embedding file; overrides `embeddings`.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Teacher checkpoint; overrides `teacher.checkpoint`.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[command(flatten)]
        ablation: Ablation,
    },
    /// Report accuracy of a checkpoint on the train and test splits.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare analytic and finite-difference gradients of the full objective.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Bundle a run's CSVs into a plot-ready directory.
    ExportRun {
        #[arg(long)]
        run: String,
        #[arg(long, default_value = "runs")]
        runs_dir: PathBuf,
        /// Defaults to `<runs-dir>/<run>/export`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
