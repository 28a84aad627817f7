//! Flat `key = value` config files with flag overrides.
//!
//! The format is deliberately primitive — one assignment per line, `#`
//! comments — so any tooling can write it. Keys mirror the sweep flags;
//! a `preset` key, if present, is applied before everything else.

use iso_opt::harness::SweepConfig;
use iso_opt::optim::OptimizerKind;
use iso_opt::problems::ProblemKind;

use crate::presets::preset;
use crate::CliError;

/// Applies a config file on top of `cfg`, in line order.
pub fn apply_config_file(cfg: &mut SweepConfig, text: &str) -> Result<(), CliError> {
    let entries = parse_entries(text)?;
    if let Some((_, value)) = entries.iter().find(|(k, _)| k == "preset") {
        *cfg = preset(value)
            .ok_or_else(|| CliError::Config(format!("unknown preset '{value}'")))?;
    }
    for (key, value) in &entries {
        if key == "preset" {
            continue;
        }
        apply_kv(cfg, key, value)?;
    }
    Ok(())
}

fn parse_entries(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {}: expected 'key = value', got '{line}'",
                lineno + 1
            )));
        };
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Sets one sweep field from its textual form. Unknown keys are errors.
pub fn apply_kv(cfg: &mut SweepConfig, key: &str, value: &str) -> Result<(), CliError> {
    let bad = |detail: String| CliError::Config(format!("key '{key}': {detail}"));
    match key {
        "optimizers" | "optimizer" => cfg.optimizers = parse_optimizers(value)?,
        "lr_count" => cfg.lr_count = parse_num(key, value)?,
        "lr_min" => cfg.lr_min = parse_num(key, value)?,
        "lr_max" => cfg.lr_max = parse_num(key, value)?,
        "dim" | "n" => cfg.n = parse_num(key, value)?,
        "depth" => cfg.depth = parse_num(key, value)?,
        "batch" | "batch_size" => cfg.batch_size = parse_num(key, value)?,
        "max_iters" => cfg.max_iters = parse_num(key, value)?,
        "seeds" => cfg.seeds = parse_list(key, value)?,
        "base_seed" => cfg.base_seed = parse_num(key, value)?,
        "threshold" | "convergence_threshold" => cfg.convergence_threshold = parse_num(key, value)?,
        "problem" => cfg.problem = value.parse::<ProblemKind>().map_err(bad)?,
        "beta1" => cfg.beta1 = parse_num(key, value)?,
        "beta2" => cfg.beta2 = parse_num(key, value)?,
        "epsilon" => cfg.epsilon = parse_num(key, value)?,
        "ridge_rel" => cfg.ridge_rel = parse_num(key, value)?,
        "ridge_abs" => cfg.ridge_abs = parse_num(key, value)?,
        "cov_subsample" => {
            cfg.cov_subsample = if value.is_empty() || value == "none" {
                None
            } else {
                Some(parse_num(key, value)?)
            }
        }
        "eval_interval" => cfg.eval_interval = parse_num(key, value)?,
        "eval_batch" => cfg.eval_batch = parse_num(key, value)?,
        "stop_on_convergence" => {
            cfg.stop_on_convergence = value
                .parse::<bool>()
                .map_err(|_| bad(format!("expected true/false, got '{value}'")))?
        }
        other => return Err(CliError::Config(format!("unknown config key '{other}'"))),
    }
    Ok(())
}

pub fn parse_optimizers(value: &str) -> Result<Vec<OptimizerKind>, CliError> {
    let list: Result<Vec<OptimizerKind>, String> = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<OptimizerKind>())
        .collect();
    let list = list.map_err(CliError::Config)?;
    if list.is_empty() {
        return Err(CliError::Config("optimizer list is empty".into()));
    }
    Ok(list)
}

pub fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| CliError::Config(format!("key '{key}': cannot parse '{s}'")))
        })
        .collect()
}

pub fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| CliError::Config(format!("key '{key}': cannot parse '{value}'")))
}
