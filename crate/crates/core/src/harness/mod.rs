//! Experiment orchestration: learning-rate sweeps, convergence/divergence
//! detection, seed fan-out, and metric aggregation.
//!
//! Every sweep cell `(optimizer, learning rate, seed)` owns its model, state,
//! and RNG stream, so cells run in parallel with no shared mutable state and
//! the result list is identical regardless of scheduling. Problem instances
//! (target map, weight init, evaluation batch) are derived from
//! `(base_seed, seed)` alone, so all optimizers and learning rates of one
//! seed compete on the same problem.

pub mod checks;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{mix_seed, DenseMatrix, SeededRng};
use crate::optim::{
    apply_step, Optimizer, OptimError, OptimizerConfig, OptimizerKind,
};
use crate::problems::{
    forward_backward, GradSource, LinearChainModel, ProblemError, ProblemInstance, ProblemKind,
};

/// Stream-domain tags for seed derivation.
const TAG_PROBLEM: u64 = 0x5052_4f42; // problem instance + init + eval batch
const TAG_TRAIN: u64 = 0x5452_4149; // per-cell training stream
const TAG_LAYER: u64 = 0x4c41_5945; // per-layer covariance subsampling

#[derive(Debug, Clone, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error("norm series too short: {len} < 10")]
    SeriesTooShort { len: usize },
    #[error("norm series entry {index} is {value}; slopes need positive finite norms")]
    NonPositiveNorm { index: usize, value: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// Full specification of one sweep: the Cartesian product
/// `optimizers x learning rates x seeds`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub optimizers: Vec<OptimizerKind>,
    /// Grid size; rates are log-spaced from `lr_max` down to `lr_min`.
    pub lr_count: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    /// Layer width.
    pub n: usize,
    /// Number of chained linear layers.
    pub depth: usize,
    pub batch_size: usize,
    pub max_iters: u64,
    pub seeds: Vec<u64>,
    /// Root of all seed derivation.
    pub base_seed: u64,
    /// Convergence when eval MSE falls below this fraction of the
    /// zero-predictor baseline.
    pub convergence_threshold: f64,
    pub problem: ProblemKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub ridge_rel: f64,
    pub ridge_abs: f64,
    pub cov_subsample: Option<usize>,
    /// Evaluate every this many iterations.
    pub eval_interval: u64,
    /// Fresh evaluation batch size, separate from training batches.
    pub eval_batch: usize,
    /// Stop a run at its first convergence (iterations-to-convergence mode).
    /// Off for fixed-budget runs that report the loss after `max_iters`;
    /// convergence is still recorded either way.
    #[serde(default = "default_true")]
    pub stop_on_convergence: bool,
}

fn default_true() -> bool {
    true
}

impl SweepConfig {
    /// Defaults mirroring the shallow-network benchmark: `n = 32`, 5 layers,
    /// batch 128, 30 learning rates in `[1e-4, 0.5]`, `beta1 = 0.9`,
    /// `beta2 = 0.99`, 3 seeds, convergence at 1% of the zero baseline.
    pub fn default_protocol() -> Self {
        Self {
            optimizers: vec![
                OptimizerKind::Sgd,
                OptimizerKind::Adam,
                OptimizerKind::Iso,
                OptimizerKind::IsoAdam,
            ],
            lr_count: 30,
            lr_min: 1e-4,
            lr_max: 0.5,
            n: 32,
            depth: 5,
            batch_size: 128,
            max_iters: 20_000,
            seeds: vec![0, 1, 2],
            base_seed: 0,
            convergence_threshold: 0.01,
            problem: ProblemKind::DeepRegression,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
            ridge_rel: crate::linalg::RIDGE_REL,
            ridge_abs: crate::linalg::RIDGE_ABS,
            cov_subsample: None,
            eval_interval: 10,
            eval_batch: 8192,
            stop_on_convergence: true,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.optimizers.is_empty() {
            return fail("optimizer list is empty".into());
        }
        if self.lr_count == 0 {
            return fail("lr_count must be at least 1".into());
        }
        if !(self.lr_min > 0.0 && self.lr_max >= self.lr_min) {
            return fail(format!(
                "learning-rate range [{}, {}] must be positive and ordered",
                self.lr_min, self.lr_max
            ));
        }
        if self.n == 0 || self.depth == 0 || self.batch_size == 0 || self.eval_batch == 0 {
            return fail("dimensions, depth and batch sizes must be positive".into());
        }
        if self.seeds.is_empty() {
            return fail("seed list is empty".into());
        }
        if self.convergence_threshold <= 0.0 || self.convergence_threshold.is_nan() {
            return fail("convergence threshold must be positive".into());
        }
        if self.eval_interval == 0 {
            return fail("eval_interval must be at least 1".into());
        }
        if self.problem == ProblemKind::PureNoise {
            return fail(
                "sweeps need a regression problem; use pure_noise_trajectory for noise runs".into(),
            );
        }
        Ok(())
    }

    /// `lr_i = lr_max * (lr_min / lr_max)^(i / (lr_count - 1))`, descending.
    pub fn learning_rates(&self) -> Vec<f64> {
        if self.lr_count == 1 {
            return vec![self.lr_max];
        }
        let ratio = self.lr_min / self.lr_max;
        (0..self.lr_count)
            .map(|i| self.lr_max * ratio.powf(i as f64 / (self.lr_count - 1) as f64))
            .collect()
    }

    /// Grid position of a rate produced by [`SweepConfig::learning_rates`].
    pub fn lr_index(&self, lr: f64) -> Option<usize> {
        self.learning_rates().iter().position(|&x| x == lr)
    }

    fn optimizer_config(&self, kind: OptimizerKind, lr: f64) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::new(kind, lr);
        cfg.beta1 = self.beta1;
        cfg.beta2 = self.beta2;
        cfg.epsilon = self.epsilon;
        cfg.ridge_rel = self.ridge_rel;
        cfg.ridge_abs = self.ridge_abs;
        cfg.cov_subsample = self.cov_subsample;
        cfg
    }
}

/// One `(optimizer, learning rate, seed)` trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub seed: u64,
    /// First evaluated iteration at which the convergence criterion held;
    /// absent when it never held within `max_iters`.
    pub iterations_to_convergence: Option<u64>,
    /// Scaled evaluation loss at termination (zero predictor = 10).
    pub final_loss: f64,
    /// Loss exceeded 100x the zero baseline or a weight went non-finite.
    pub diverged: bool,
    /// Sampled `(iteration, scaled loss)` pairs.
    pub loss_series: Vec<(u64, f64)>,
    /// Seconds; informational only, excluded from deterministic outputs.
    pub wall_time: f64,
}

/// Evaluation policy plus stopping rule for a single run.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub max_iters: u64,
    pub eval_interval: u64,
    pub convergence_threshold: f64,
    /// Record a series point every this many iterations (multiple of
    /// `eval_interval`); convergence is still checked at every evaluation.
    pub series_stride: u64,
    pub stop_on_convergence: bool,
}

impl RunSettings {
    pub fn from_sweep(config: &SweepConfig) -> Self {
        // Cap stored series at ~200 points per run.
        let evals = config.max_iters / config.eval_interval.max(1);
        let stride_evals = (evals / 200).max(1);
        Self {
            max_iters: config.max_iters,
            eval_interval: config.eval_interval,
            convergence_threshold: config.convergence_threshold,
            series_stride: stride_evals * config.eval_interval,
            stop_on_convergence: config.stop_on_convergence,
        }
    }
}

/// Scaled loss exceeding this is divergence (100x the zero baseline of 10).
const DIVERGENCE_SCALED_LOSS: f64 = 1000.0;

/// Precomputed per-seed data shared by every cell of that seed: the problem,
/// the weight init, and the Gram statistics of the fresh evaluation batch.
pub struct ProblemSetup {
    pub instance: ProblemInstance,
    pub model_init: LinearChainModel,
    eval: EvalCache,
}

impl ProblemSetup {
    pub fn for_seed(config: &SweepConfig, seed: u64) -> Result<Self, HarnessError> {
        let mut rng = SeededRng::new(mix_seed(&[config.base_seed, TAG_PROBLEM, seed]));
        let instance = match config.problem {
            ProblemKind::DeepRegression => {
                ProblemInstance::deep_regression(&mut rng, config.n, config.batch_size)
            }
            ProblemKind::SigmaRegression => {
                ProblemInstance::sigma_regression(&mut rng, config.n, config.batch_size, 10.0)
            }
            ProblemKind::PureNoise => {
                return Err(HarnessError::InvalidConfig(
                    "pure-noise problems have no regression evaluation".into(),
                ))
            }
        };
        let model_init = LinearChainModel::init(&mut rng, config.depth, config.n);
        let eval_x = instance.sample_inputs_sized(&mut rng, config.eval_batch);
        let eval = EvalCache::new(&eval_x, instance.a.as_ref().unwrap());
        Ok(Self {
            instance,
            model_init,
            eval,
        })
    }

    /// Scaled loss of a model on this setup's evaluation batch.
    pub fn eval_scaled_loss(&self, model: &LinearChainModel) -> f64 {
        self.eval.scaled_loss(model)
    }
}

/// Gram-factored evaluation: with `C = X^T X`, `D = C A` and
/// `t = tr(A^T C A)` precomputed, the eval-batch MSE of the collapsed product
/// `P` is `(tr(P^T C P) - 2 tr(P^T D) + t) / (2 b)` — identical statistics to
/// a direct pass over the batch at a fraction of the cost.
struct EvalCache {
    gram: DenseMatrix,
    gram_a: DenseMatrix,
    target_sq: f64,
    batch: f64,
}

impl EvalCache {
    fn new(eval_x: &DenseMatrix, a: &DenseMatrix) -> Self {
        let gram = eval_x.gram_scaled(1.0);
        let gram_a = gram.matmul(a);
        let target_sq = a.dot(&gram_a);
        Self {
            gram,
            gram_a,
            target_sq,
            batch: eval_x.rows() as f64,
        }
    }

    fn scaled_loss(&self, model: &LinearChainModel) -> f64 {
        let p = model.product();
        let quad = p.dot(&self.gram.matmul(&p));
        let cross = p.dot(&self.gram_a);
        let mse = 0.5 * (quad - 2.0 * cross + self.target_sq) / self.batch;
        let zero_mse = 0.5 * self.target_sq / self.batch;
        10.0 * mse / zero_mse
    }
}

/// Runs one cell to convergence, divergence, or `max_iters`.
///
/// Deterministic for a fixed `(setup, optimizer_config, settings, train_rng
/// seed)`. Optimizer failures (e.g. a preconditioner singularity beyond ridge
/// rescue) terminate the run with the diverged flag rather than propagating.
pub fn run_single(
    setup: &ProblemSetup,
    optimizer_config: &OptimizerConfig,
    settings: &RunSettings,
    train_seed: u64,
    seed_label: u64,
) -> RunRecord {
    let start = std::time::Instant::now();
    let mut rng = SeededRng::new(train_seed);
    let mut model = setup.model_init.clone();
    let depth = model.depth();
    let mut optimizers: Vec<Optimizer> = (0..depth)
        .map(|layer| {
            Optimizer::with_seed(
                optimizer_config.clone(),
                setup.instance.n,
                setup.instance.n,
                mix_seed(&[train_seed, TAG_LAYER, layer as u64]),
            )
            .expect("validated config")
        })
        .collect();

    let mut series = Vec::new();
    let mut converged_at = None;
    let mut diverged = false;
    let mut final_loss = setup.eval_scaled_loss(&model);
    let mut last_eval_iter = 0;
    series.push((0, final_loss));
    if final_loss < 10.0 * settings.convergence_threshold {
        converged_at = Some(0);
    }

    let mut iter = 0;
    while !diverged
        && iter < settings.max_iters
        && (converged_at.is_none() || !settings.stop_on_convergence)
    {
        iter += 1;
        let x = setup.instance.sample_inputs(&mut rng);
        let trace = match setup.instance.targets(&x) {
            Some(target) => forward_backward(&model, &x, GradSource::Regression { target: &target }),
            None => forward_backward(&model, &x, GradSource::PureNoise(&mut rng)),
        };
        let trace = match trace {
            Ok(t) => t,
            Err(_) => {
                diverged = true;
                break;
            }
        };
        let mut failed = false;
        for (layer, opt) in optimizers.iter_mut().enumerate() {
            match opt.step(&trace.layers[layer]) {
                Ok(update) => {
                    let w = apply_step(&model.layers()[layer], &update, optimizer_config.alpha)
                        .expect("shapes fixed for the whole run");
                    model.set_layer(layer, w);
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if failed || !model.is_finite() {
            diverged = true;
            break;
        }

        if iter % settings.eval_interval == 0 {
            let loss = setup.eval_scaled_loss(&model);
            last_eval_iter = iter;
            if iter % settings.series_stride == 0 {
                series.push((iter, loss));
            }
            final_loss = loss;
            if loss < 10.0 * settings.convergence_threshold {
                converged_at = converged_at.or(Some(iter));
            } else if !loss.is_finite() || loss > DIVERGENCE_SCALED_LOSS {
                diverged = true;
            }
        }
    }

    // Loss at the exact stopping iteration: reuse the aligned evaluation
    // when fresh, otherwise evaluate once more.
    if !model.is_finite() {
        final_loss = f64::INFINITY;
    } else if last_eval_iter != iter {
        final_loss = setup.eval_scaled_loss(&model);
    }
    if series.last().map(|&(i, _)| i) != Some(iter) {
        series.push((iter, final_loss));
    }

    RunRecord {
        optimizer: optimizer_config.kind,
        lr: optimizer_config.alpha,
        seed: seed_label,
        iterations_to_convergence: converged_at,
        final_loss,
        diverged,
        loss_series: series,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// Runs the full Cartesian product in parallel. Records come back sorted by
/// (optimizer order as configured, learning-rate index, seed index); cell
/// failures are recorded in their `RunRecord`, never propagated.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<RunRecord>, HarnessError> {
    config.validate()?;
    let rates = config.learning_rates();
    let settings = RunSettings::from_sweep(config);

    let setups: Vec<ProblemSetup> = config
        .seeds
        .iter()
        .map(|&seed| ProblemSetup::for_seed(config, seed))
        .collect::<Result<_, _>>()?;

    let mut cells = Vec::new();
    for &kind in &config.optimizers {
        for (lr_index, &lr) in rates.iter().enumerate() {
            for (seed_index, &seed) in config.seeds.iter().enumerate() {
                cells.push((kind, lr_index, lr, seed_index, seed));
            }
        }
    }

    let records: Vec<RunRecord> = cells
        .par_iter()
        .map(|&(kind, lr_index, lr, seed_index, seed)| {
            let optimizer_config = config.optimizer_config(kind, lr);
            let train_seed = mix_seed(&[
                config.base_seed,
                TAG_TRAIN,
                kind.seed_tag(),
                lr_index as u64,
                seed,
            ]);
            run_single(
                &setups[seed_index],
                &optimizer_config,
                &settings,
                train_seed,
                seed,
            )
        })
        .collect();
    Ok(records)
}

/// Least-squares slope of `ln(norm)` against the iteration index.
pub fn divergence_slope(norm_series: &[f64]) -> Result<f64, HarnessError> {
    if norm_series.len() < 10 {
        return Err(HarnessError::SeriesTooShort {
            len: norm_series.len(),
        });
    }
    for (index, &value) in norm_series.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(HarnessError::NonPositiveNorm { index, value });
        }
    }
    let n = norm_series.len() as f64;
    let mean_t = (norm_series.len() - 1) as f64 / 2.0;
    let mean_y = norm_series.iter().map(|v| v.ln()).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, &v) in norm_series.iter().enumerate() {
        let dt = t as f64 - mean_t;
        num += dt * (v.ln() - mean_y);
        den += dt * dt;
    }
    Ok(num / den)
}

/// A pure-noise training run configuration.
#[derive(Debug, Clone)]
pub struct PureNoiseRun {
    pub depth: usize,
    pub n: usize,
    pub batch_size: usize,
    pub steps: u64,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

/// Trains on the pure-noise problem and returns the stacked weight norm
/// after every step (index 0 is the initial norm). Stops early if a weight
/// goes non-finite; the returned series contains only finite norms.
pub fn pure_noise_trajectory(run: &PureNoiseRun) -> Result<Vec<f64>, HarnessError> {
    run.optimizer.validate()?;
    let mut rng = SeededRng::new(mix_seed(&[run.seed, TAG_TRAIN, run.optimizer.kind.seed_tag()]));
    let mut model = LinearChainModel::init(
        &mut SeededRng::new(mix_seed(&[run.seed, TAG_PROBLEM])),
        run.depth,
        run.n,
    );
    let mut optimizers: Vec<Optimizer> = (0..run.depth)
        .map(|layer| {
            Optimizer::with_seed(
                run.optimizer.clone(),
                run.n,
                run.n,
                mix_seed(&[run.seed, TAG_LAYER, layer as u64]),
            )
        })
        .collect::<Result<_, _>>()?;

    let mut norms = Vec::with_capacity(run.steps as usize + 1);
    norms.push(model.weight_norm());
    for _ in 0..run.steps {
        let x = gaussian_inputs(&mut rng, run.batch_size, run.n);
        let trace = match forward_backward(&model, &x, GradSource::PureNoise(&mut rng)) {
            Ok(t) => t,
            Err(_) => break,
        };
        let mut failed = false;
        for (layer, opt) in optimizers.iter_mut().enumerate() {
            match opt.step(&trace.layers[layer]) {
                Ok(update) => {
                    let w = apply_step(&model.layers()[layer], &update, run.optimizer.alpha)
                        .expect("fixed shapes");
                    model.set_layer(layer, w);
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if failed || !model.is_finite() {
            break;
        }
        let norm = model.weight_norm();
        if !norm.is_finite() {
            break;
        }
        norms.push(norm);
    }
    Ok(norms)
}

fn gaussian_inputs(rng: &mut SeededRng, batch: usize, n: usize) -> DenseMatrix {
    crate::linalg::gaussian_matrix(rng, batch, n, 1.0)
}

/// Which scalar a sweep is optimized for when picking the best rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BestMetric {
    /// Median iterations-to-convergence (runs that never converged count as
    /// infinite).
    IterationsToConvergence,
    /// Median final scaled loss (diverged runs count as infinite).
    FinalLoss,
}

/// Per-optimizer sweep outcome: the best learning rate and its metric, or
/// `None` when no rate produced a finite median ("no convergence").
#[derive(Debug, Clone, Serialize)]
pub struct OptimizerSummary {
    pub optimizer: OptimizerKind,
    pub best_lr: Option<f64>,
    pub metric: Option<f64>,
}

/// Picks, per optimizer, the learning rate minimizing the median-over-seeds
/// metric. Ties break toward the smaller rate.
pub fn best_per_optimizer(records: &[RunRecord], metric: BestMetric) -> Vec<OptimizerSummary> {
    let mut order: Vec<OptimizerKind> = Vec::new();
    for r in records {
        if !order.contains(&r.optimizer) {
            order.push(r.optimizer);
        }
    }

    order
        .into_iter()
        .map(|kind| {
            let mut by_lr: Vec<(f64, Vec<f64>)> = Vec::new();
            for r in records.iter().filter(|r| r.optimizer == kind) {
                let value = match metric {
                    BestMetric::IterationsToConvergence => r
                        .iterations_to_convergence
                        .map(|i| i as f64)
                        .unwrap_or(f64::INFINITY),
                    BestMetric::FinalLoss => {
                        if r.diverged || !r.final_loss.is_finite() {
                            f64::INFINITY
                        } else {
                            r.final_loss
                        }
                    }
                };
                match by_lr.iter_mut().find(|(lr, _)| *lr == r.lr) {
                    Some((_, vs)) => vs.push(value),
                    None => by_lr.push((r.lr, vec![value])),
                }
            }
            let mut best: Option<(f64, f64)> = None; // (median, lr)
            for (lr, mut values) in by_lr {
                let m = median(&mut values);
                if !m.is_finite() {
                    continue;
                }
                best = match best {
                    None => Some((m, lr)),
                    Some((bm, blr)) => {
                        if m < bm || (m == bm && lr < blr) {
                            Some((m, lr))
                        } else {
                            Some((bm, blr))
                        }
                    }
                };
            }
            OptimizerSummary {
                optimizer: kind,
                best_lr: best.map(|(_, lr)| lr),
                metric: best.map(|(m, _)| m),
            }
        })
        .collect()
}

/// Median; averages the middle pair for even lengths.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}
