//! Six optimizers behind one per-weight-matrix step interface.
//!
//! Every optimizer consumes a [`LayerBatch`] — the pair `(X, G)` of layer
//! inputs and output gradients for one weight matrix — and produces an update
//! matrix `W_U`, applied as `W <- W - alpha * W_U`. The stochastic gradient
//! is `X^T G / b` throughout: the batch-mean convention keeps moving averages
//! stable across batch sizes.

mod adam;
mod iso;
mod sgd;
mod shampoo;

pub use adam::adam_step;
pub use iso::{iso_step, isoadam_step};
pub use sgd::{sgd_update, sign_descent_update};
pub use shampoo::shampoo_update;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, DenseMatrix, LinalgError, SeededRng, SpdMatrix};

#[derive(Debug, Clone, thiserror::Error)]
pub enum OptimError {
    #[error("shape mismatch: {detail}")]
    ShapeMismatch { detail: String },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("subsample of {target} rows invalid for batch of {batch}")]
    InvalidSubsample { target: usize, batch: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The optimizer family. `Sgd` and `SignDescent` and `Shampoo` are stateless;
/// the rest keep per-weight-matrix state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "sgd")]
    Sgd,
    #[serde(rename = "sign_descent")]
    SignDescent,
    #[serde(rename = "adam")]
    Adam,
    #[serde(rename = "iso")]
    Iso,
    #[serde(rename = "isoadam")]
    IsoAdam,
    #[serde(rename = "shampoo")]
    Shampoo,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::Sgd,
        OptimizerKind::SignDescent,
        OptimizerKind::Adam,
        OptimizerKind::Iso,
        OptimizerKind::IsoAdam,
        OptimizerKind::Shampoo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::SignDescent => "sign_descent",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Iso => "iso",
            OptimizerKind::IsoAdam => "isoadam",
            OptimizerKind::Shampoo => "shampoo",
        }
    }

    /// Stable tag for seed derivation; must never change across releases.
    pub fn seed_tag(&self) -> u64 {
        match self {
            OptimizerKind::Sgd => 1,
            OptimizerKind::SignDescent => 2,
            OptimizerKind::Adam => 3,
            OptimizerKind::Iso => 4,
            OptimizerKind::IsoAdam => 5,
            OptimizerKind::Shampoo => 6,
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "sign_descent" | "sign" | "signsgd" => Ok(OptimizerKind::SignDescent),
            "adam" => Ok(OptimizerKind::Adam),
            "iso" => Ok(OptimizerKind::Iso),
            "isoadam" | "iso_adam" => Ok(OptimizerKind::IsoAdam),
            "shampoo" => Ok(OptimizerKind::Shampoo),
            other => Err(format!("unknown optimizer '{other}'")),
        }
    }
}

/// Hyperparameters shared by all optimizer kinds. Unused knobs are ignored by
/// kinds that do not consume them (e.g. `beta2` by SGD).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Learning rate applied by [`apply_step`].
    pub alpha: f64,
    /// Momentum / covariance EMA decay.
    pub beta1: f64,
    /// Entrywise normalization EMA decay (Adam, IsoAdam).
    pub beta2: f64,
    /// Denominator floor for the entrywise-normalized updates.
    pub epsilon: f64,
    /// Relative ridge applied to covariances before fractional powers.
    pub ridge_rel: f64,
    /// Absolute ridge floor.
    pub ridge_abs: f64,
    /// When set, covariances are estimated from this many uniformly sampled
    /// batch rows instead of the full batch.
    pub cov_subsample: Option<usize>,
    /// Adam-style bias correction of the EMAs. On by default; disable for
    /// the uncorrected textbook recurrences.
    pub bias_correction: bool,
    /// Recompute the Iso/IsoAdam preconditioners every this many steps.
    pub update_interval: usize,
}

impl OptimizerConfig {
    /// Config with the experiment defaults: `beta1 = 0.9`, `beta2 = 0.99`,
    /// `epsilon = 1e-8`, the standard ridge, preconditioners refreshed every
    /// step, bias correction on.
    pub fn new(kind: OptimizerKind, alpha: f64) -> Self {
        Self {
            kind,
            alpha,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
            ridge_rel: linalg::RIDGE_REL,
            ridge_abs: linalg::RIDGE_ABS,
            cov_subsample: None,
            bias_correction: true,
            update_interval: 1,
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let fail = |msg: String| Err(OptimError::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return fail(format!("beta1 must lie in [0, 1), got {}", self.beta1));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return fail(format!("beta2 must lie in [0, 1), got {}", self.beta2));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.ridge_rel < 0.0 || self.ridge_abs < 0.0 {
            return fail("ridge terms must be non-negative".to_string());
        }
        if self.update_interval == 0 {
            return fail("update_interval must be at least 1".to_string());
        }
        if self.cov_subsample == Some(0) {
            return fail("cov_subsample must be at least 1 when set".to_string());
        }
        Ok(())
    }
}

/// One batch of per-layer data: `X` holds the inputs to the weight matrix
/// (`b x n`), `G` the gradients of the loss with respect to the layer output
/// (`b x m`).
#[derive(Debug, Clone)]
pub struct LayerBatch {
    x: DenseMatrix,
    g: DenseMatrix,
}

impl LayerBatch {
    pub fn new(x: DenseMatrix, g: DenseMatrix) -> Result<Self, OptimError> {
        if x.rows() != g.rows() {
            return Err(OptimError::ShapeMismatch {
                detail: format!(
                    "X has {} rows but G has {}; the batch dimension must be shared",
                    x.rows(),
                    g.rows()
                ),
            });
        }
        Ok(Self { x, g })
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn g(&self) -> &DenseMatrix {
        &self.g
    }

    pub fn batch_size(&self) -> usize {
        self.x.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.g.cols()
    }

    /// The stochastic gradient `X^T G / b`.
    pub fn mean_gradient(&self) -> DenseMatrix {
        self.x
            .mul_at_b(&self.g)
            .scaled(1.0 / self.batch_size() as f64)
    }

    /// `X^T X / b`, exactly symmetric.
    pub fn input_covariance(&self) -> DenseMatrix {
        self.x.gram_scaled(1.0 / self.batch_size() as f64)
    }

    /// `G^T G / b`, exactly symmetric.
    pub fn grad_covariance(&self) -> DenseMatrix {
        self.g.gram_scaled(1.0 / self.batch_size() as f64)
    }
}

/// Per-weight-matrix persistent state. All buffers are allocated up front;
/// which of them a step touches depends on the optimizer kind.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    /// First moment (EMA of `X^T G / b`), `n x m`.
    pub(crate) m: DenseMatrix,
    /// Second moment (EMA of squared entries), `n x m`; entrywise >= 0.
    pub(crate) v: DenseMatrix,
    /// Left covariance EMA (`X^T X / b`), `n x n`, kept symmetric.
    pub(crate) l: DenseMatrix,
    /// Right covariance EMA (`G^T G / b`), `m x m`, kept symmetric.
    pub(crate) r: DenseMatrix,
    pub(crate) d1: f64,
    pub(crate) d2: f64,
    beta1_pow: f64,
    beta2_pow: f64,
    pub(crate) step_count: u64,
    pub(crate) cached_precond: Option<(DenseMatrix, DenseMatrix)>,
    /// Eigenbases of the last preconditioner refresh; warm-start hints for
    /// the next one (the covariance EMAs move slowly between steps).
    pub(crate) basis_l: Option<DenseMatrix>,
    pub(crate) basis_r: Option<DenseMatrix>,
}

impl OptimizerState {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            m: DenseMatrix::zeros(input_dim, output_dim),
            v: DenseMatrix::zeros(input_dim, output_dim),
            l: DenseMatrix::zeros(input_dim, input_dim),
            r: DenseMatrix::zeros(output_dim, output_dim),
            d1: 0.0,
            d2: 0.0,
            beta1_pow: 1.0,
            beta2_pow: 1.0,
            step_count: 0,
            cached_precond: None,
            basis_l: None,
            basis_r: None,
        }
    }

    pub fn first_moment(&self) -> &DenseMatrix {
        &self.m
    }

    pub fn second_moment(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn left_covariance(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn right_covariance(&self) -> &DenseMatrix {
        &self.r
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }

    pub fn d2(&self) -> f64 {
        self.d2
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Advances `d = 1 - beta^t` via running products so the closed form
    /// holds exactly at every step.
    pub(crate) fn advance_denominators(&mut self, beta1: f64, beta2: f64) {
        self.beta1_pow *= beta1;
        self.beta2_pow *= beta2;
        self.d1 = 1.0 - self.beta1_pow;
        self.d2 = 1.0 - self.beta2_pow;
    }

    pub(crate) fn check_batch(&self, batch: &LayerBatch) -> Result<(), OptimError> {
        if self.m.shape() != (batch.input_dim(), batch.output_dim()) {
            return Err(OptimError::ShapeMismatch {
                detail: format!(
                    "state is for a {}x{} weight matrix but batch implies {}x{}",
                    self.m.rows(),
                    self.m.cols(),
                    batch.input_dim(),
                    batch.output_dim()
                ),
            });
        }
        Ok(())
    }
}

/// `W' = W - alpha * update`.
pub fn apply_step(w: &DenseMatrix, update: &DenseMatrix, alpha: f64) -> Result<DenseMatrix, OptimError> {
    if w.shape() != update.shape() {
        return Err(OptimError::ShapeMismatch {
            detail: format!(
                "weight is {}x{} but update is {}x{}",
                w.rows(),
                w.cols(),
                update.rows(),
                update.cols()
            ),
        });
    }
    Ok(w.sub(&update.scaled(alpha)))
}

/// `X^T X / b` estimated from `target_rows` uniformly sampled rows (without
/// replacement), scaled to match the full-batch expectation.
pub fn subsample_covariance(
    x: &DenseMatrix,
    rng: &mut SeededRng,
    target_rows: usize,
) -> Result<SpdMatrix, OptimError> {
    if target_rows == 0 || target_rows > x.rows() {
        return Err(OptimError::InvalidSubsample {
            target: target_rows,
            batch: x.rows(),
        });
    }
    let rows = rng.sample_without_replacement(x.rows(), target_rows);
    let gram = gram_of_rows(x, &rows, 1.0 / target_rows as f64);
    Ok(SpdMatrix::from_symmetric(gram)?)
}

/// Symmetric `scale * sum_r x_r x_r^T` over a row subset.
pub(crate) fn gram_of_rows(x: &DenseMatrix, rows: &[usize], scale: f64) -> DenseMatrix {
    let n = x.cols();
    let mut out = DenseMatrix::zeros(n, n);
    for &r in rows {
        let row = x.row(r);
        for i in 0..n {
            let v = row[i];
            for j in i..n {
                let cur = out.get(i, j);
                out.set(i, j, cur + v * row[j]);
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            let v = out.get(i, j) * scale;
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

/// Stateful stepping handle: owns the config, the per-weight state, and the
/// RNG stream used for covariance subsampling. One instance per weight
/// matrix; distinct instances never share mutable state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    state: OptimizerState,
    subsample_rng: SeededRng,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, input_dim: usize, output_dim: usize) -> Result<Self, OptimError> {
        Self::with_seed(config, input_dim, output_dim, 0)
    }

    /// As [`Optimizer::new`] with an explicit seed for the covariance
    /// subsampling stream (only consumed when `cov_subsample` is set).
    pub fn with_seed(
        config: OptimizerConfig,
        input_dim: usize,
        output_dim: usize,
        seed: u64,
    ) -> Result<Self, OptimError> {
        config.validate()?;
        Ok(Self {
            config,
            state: OptimizerState::new(input_dim, output_dim),
            subsample_rng: SeededRng::new(seed),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    /// Computes the update matrix for one batch and advances the state.
    /// The caller applies it with [`apply_step`].
    pub fn step(&mut self, batch: &LayerBatch) -> Result<DenseMatrix, OptimError> {
        let rng = self
            .config
            .cov_subsample
            .is_some()
            .then_some(&mut self.subsample_rng);
        match self.config.kind {
            OptimizerKind::Sgd => Ok(sgd_update(batch)),
            OptimizerKind::SignDescent => Ok(sign_descent_update(batch)),
            OptimizerKind::Adam => adam_step(&mut self.state, batch, &self.config),
            OptimizerKind::Iso => iso::iso_step_inner(&mut self.state, batch, &self.config, rng),
            OptimizerKind::IsoAdam => {
                iso::isoadam_step_inner(&mut self.state, batch, &self.config, rng)
            }
            OptimizerKind::Shampoo => shampoo_update(batch, &self.config),
        }
    }
}
