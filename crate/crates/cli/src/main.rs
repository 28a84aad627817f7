use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iso_opt_cli::commands::{
    cmd_check, cmd_firststep, cmd_purenoise, cmd_sweep, configure_workers, FirstStepArgs,
    PureNoiseArgs, SweepArgs,
};

/// Matrix-preconditioned optimizer experiments: learning-rate sweeps,
/// pure-noise diagnostics, first-step closed forms, and the invariant suite.
#[derive(Parser)]
#[command(name = "iso-opt", version, about)]
struct Cli {
    /// Worker threads for parallel sweep cells (default: one per core;
    /// env fallback ISO_OPT_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a learning-rate sweep and write sweep.csv + sweep.json.
    Sweep(SweepFlags),
    /// Train on the pure-noise problem and report weight-norm growth.
    Purenoise(PureNoiseFlags),
    /// Compare actual first optimizer steps against their closed forms.
    Firststep(FirstStepFlags),
    /// Run the invariant suite; exits 1 if any property fails.
    Check,
}

#[derive(Args)]
struct SweepFlags {
    /// Canned protocol: fig3 (5-layer convergence) or fig4 (40-layer loss).
    #[arg(long)]
    preset: Option<String>,
    /// Flat key=value config file applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for sweep.csv and sweep.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Comma-separated optimizers (sgd, sign_descent, adam, iso, isoadam,
    /// shampoo).
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr_min: Option<f64>,
    #[arg(long)]
    lr_max: Option<f64>,
    #[arg(long)]
    lr_count: Option<usize>,
    /// Number of chained linear layers.
    #[arg(long)]
    depth: Option<usize>,
    /// Layer width n.
    #[arg(long)]
    dim: Option<usize>,
    /// Training batch size.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    max_iters: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Args)]
struct PureNoiseFlags {
    #[arg(long)]
    depth: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Comma-separated step sizes.
    #[arg(long, default_value = "0.1,0.01,0.001")]
    alpha: String,
    #[arg(long, default_value_t = 2000)]
    steps: u64,
    #[arg(long, default_value = "sgd")]
    optimizer: String,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct FirstStepFlags {
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 65536)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write firststep.json into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_workers(cli.workers) {
        eprintln!("{e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let result = match cli.command {
        Command::Sweep(f) => cmd_sweep(&SweepArgs {
            preset: f.preset,
            config: f.config,
            out: f.out,
            optimizer: f.optimizer,
            lr_min: f.lr_min,
            lr_max: f.lr_max,
            lr_count: f.lr_count,
            depth: f.depth,
            dim: f.dim,
            batch: f.batch,
            max_iters: f.max_iters,
            seeds: f.seeds,
        }),
        Command::Purenoise(f) => cmd_purenoise(&PureNoiseArgs {
            depth: f.depth,
            dim: f.dim,
            alphas: f.alpha,
            steps: f.steps,
            optimizer: f.optimizer,
            batch: f.batch,
            seed: f.seed,
            out: f.out,
        }),
        Command::Firststep(f) => cmd_firststep(&FirstStepArgs {
            dim: f.dim,
            batch: f.batch,
            seed: f.seed,
            out: f.out,
        }),
        Command::Check => cmd_check(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
