//! Subcommand implementations.

use std::fs;
use std::path::PathBuf;

use iso_opt::harness::checks::{measure_first_step, run_all_checks};
use iso_opt::harness::{
    best_per_optimizer, divergence_slope, pure_noise_trajectory, run_sweep, BestMetric,
    PureNoiseRun, SweepConfig,
};
use iso_opt::optim::{OptimizerConfig, OptimizerKind};

use crate::config::{apply_config_file, apply_kv, parse_list, parse_optimizers};
use crate::emit;
use crate::presets::{preset, PRESET_NAMES};
use crate::CliError;

/// Everything `sweep` accepts on the command line; `None` means
/// "not overridden".
#[derive(Debug, Default, Clone)]
pub struct SweepArgs {
    pub preset: Option<String>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub optimizer: Option<String>,
    pub lr_min: Option<f64>,
    pub lr_max: Option<f64>,
    pub lr_count: Option<usize>,
    pub depth: Option<usize>,
    pub dim: Option<usize>,
    pub batch: Option<usize>,
    pub max_iters: Option<u64>,
    pub seeds: Option<String>,
}

/// Resolves precedence: protocol defaults, then `--preset`, then the config
/// file, then individual flags.
pub fn resolve_sweep_config(args: &SweepArgs) -> Result<SweepConfig, CliError> {
    let mut cfg = match &args.preset {
        Some(name) => preset(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown preset '{name}' (available: {})",
                PRESET_NAMES.join(", ")
            ))
        })?,
        None => SweepConfig::default_protocol(),
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        apply_config_file(&mut cfg, &text)?;
    }
    if let Some(list) = &args.optimizer {
        cfg.optimizers = parse_optimizers(list)?;
    }
    if let Some(v) = args.lr_min {
        cfg.lr_min = v;
    }
    if let Some(v) = args.lr_max {
        cfg.lr_max = v;
    }
    if let Some(v) = args.lr_count {
        cfg.lr_count = v;
    }
    if let Some(v) = args.depth {
        cfg.depth = v;
    }
    if let Some(v) = args.dim {
        apply_kv(&mut cfg, "dim", &v.to_string())?;
    }
    if let Some(v) = args.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = args.max_iters {
        cfg.max_iters = v;
    }
    if let Some(list) = &args.seeds {
        cfg.seeds = parse_list("seeds", list)?;
    }
    cfg.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

/// `sweep`: run the grid, write `sweep.csv` and `sweep.json`, print the
/// per-optimizer best learning rates.
pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let cfg = resolve_sweep_config(args)?;
    let cells = cfg.optimizers.len() * cfg.lr_count * cfg.seeds.len();
    println!(
        "sweep: {} optimizers x {} rates x {} seeds = {} runs (depth {}, n {}, batch {})",
        cfg.optimizers.len(),
        cfg.lr_count,
        cfg.seeds.len(),
        cells,
        cfg.depth,
        cfg.n,
        cfg.batch_size
    );
    let records = run_sweep(&cfg).map_err(|e| CliError::Config(e.to_string()))?;

    fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("sweep.csv");
    let json_path = args.out.join("sweep.json");
    emit::write_sweep_csv(&csv_path, &records)?;
    emit::write_sweep_json(&json_path, &cfg, &records)?;

    let metric = if cfg.stop_on_convergence {
        BestMetric::IterationsToConvergence
    } else {
        BestMetric::FinalLoss
    };
    for s in best_per_optimizer(&records, metric) {
        match (s.best_lr, s.metric) {
            (Some(lr), Some(m)) => println!(
                "  {:>12}: best lr {:.6} ({} {:.4})",
                s.optimizer.name(),
                lr,
                match metric {
                    BestMetric::IterationsToConvergence => "median iterations",
                    BestMetric::FinalLoss => "median final loss",
                },
                m
            ),
            _ => println!("  {:>12}: no convergence at any rate", s.optimizer.name()),
        }
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PureNoiseArgs {
    pub depth: usize,
    pub dim: usize,
    pub alphas: String,
    pub steps: u64,
    pub optimizer: String,
    pub batch: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// `purenoise`: per-step weight-norm series plus a fitted divergence slope
/// per step size.
pub fn cmd_purenoise(args: &PureNoiseArgs) -> Result<(), CliError> {
    if args.depth < 1 {
        return Err(CliError::Config("depth must be at least 1".into()));
    }
    let kind: OptimizerKind = args
        .optimizer
        .parse()
        .map_err(|e: String| CliError::Config(e))?;
    let alphas: Vec<f64> = parse_list("alpha", &args.alphas)?;
    if alphas.is_empty() {
        return Err(CliError::Config("alpha list is empty".into()));
    }

    let mut all_norms: Vec<(f64, Vec<f64>)> = Vec::new();
    for &alpha in &alphas {
        let optimizer = OptimizerConfig::new(kind, alpha);
        optimizer
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let norms = pure_noise_trajectory(&PureNoiseRun {
            depth: args.depth,
            n: args.dim,
            batch_size: args.batch,
            steps: args.steps,
            optimizer,
            seed: args.seed,
        })
        .map_err(|e| CliError::Config(e.to_string()))?;
        all_norms.push((alpha, norms));
    }

    let series_rows: Vec<emit::NoiseSeriesRow<'_>> = all_norms
        .iter()
        .map(|(alpha, norms)| emit::NoiseSeriesRow {
            optimizer: kind.name(),
            alpha: *alpha,
            norms,
        })
        .collect();
    let summary_rows: Vec<emit::NoiseSummaryRow<'_>> = all_norms
        .iter()
        .map(|(alpha, norms)| {
            let slope = divergence_slope(norms).unwrap_or(f64::NAN);
            let max_ratio = norms.iter().fold(0.0_f64, |a, &v| a.max(v / norms[0]));
            let final_ratio = norms.last().unwrap() / norms[0];
            emit::NoiseSummaryRow {
                optimizer: kind.name(),
                alpha: *alpha,
                slope,
                max_norm_ratio: max_ratio,
                final_norm_ratio: final_ratio,
                bounded: norms.len() as u64 == args.steps + 1 && max_ratio <= 20.0,
            }
        })
        .collect();

    fs::create_dir_all(&args.out)?;
    let series_path = args.out.join("purenoise.csv");
    let summary_path = args.out.join("purenoise_summary.csv");
    fs::write(&series_path, emit::purenoise_series_csv(&series_rows))?;
    fs::write(&summary_path, emit::purenoise_summary_csv(&summary_rows))?;

    for r in &summary_rows {
        println!(
            "{} alpha={:<8.5} slope={:+.4e} max_ratio={:.3} bounded={}",
            r.optimizer, r.alpha, r.slope, r.max_norm_ratio, r.bounded
        );
    }
    println!(
        "wrote {} and {}",
        series_path.display(),
        summary_path.display()
    );
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FirstStepArgs {
    pub dim: usize,
    pub batch: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

/// `firststep`: measured agreement between actual first optimizer steps and
/// the closed forms (Adam vs sign, Iso vs polar projection), as JSON.
pub fn cmd_firststep(args: &FirstStepArgs) -> Result<(), CliError> {
    if args.dim == 0 || args.batch == 0 {
        return Err(CliError::Config("dim and batch must be positive".into()));
    }
    let report = measure_first_step(args.dim, args.batch, args.seed);
    let doc = serde_json::json!({
        "n": report.n,
        "batch": report.batch,
        "seed": report.seed,
        "adam_sign_agreement": report.adam_sign_agreement,
        "iso_polar_distance": report.iso_polar_distance,
    });
    let text = serde_json::to_string_pretty(&doc).expect("serializable report");
    println!("{text}");
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        let path = dir.join("firststep.json");
        fs::write(&path, format!("{text}\n"))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

/// `check`: the full invariant suite, one line per property.
pub fn cmd_check() -> Result<(), CliError> {
    let results = run_all_checks();
    let mut failed = 0;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {:<28} {}", r.name, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    println!(
        "{} of {} properties passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        return Err(CliError::CheckFailed);
    }
    Ok(())
}

/// Worker-count resolution: flag beats `ISO_OPT_WORKERS`, which beats the
/// rayon default (one thread per core).
pub fn configure_workers(flag: Option<usize>) -> Result<(), CliError> {
    let from_env = std::env::var("ISO_OPT_WORKERS")
        .ok()
        .map(|v| {
            v.parse::<usize>()
                .map_err(|_| CliError::Config(format!("ISO_OPT_WORKERS: cannot parse '{v}'")))
        })
        .transpose()?;
    if let Some(workers) = flag.or(from_env) {
        if workers == 0 {
            return Err(CliError::Config("worker count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot configure {workers} workers: {e}")))?;
    }
    Ok(())
}
