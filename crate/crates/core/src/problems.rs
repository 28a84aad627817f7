//! Synthetic problems with exact manual forward/backward for deep linear
//! chains.
//!
//! Batches are row-major: row `i` of `X` is one sample, the model output is
//! `X W_1 W_2 ... W_k`, and a target map `A` acts on the right (`T = X A`).
//! Losses are summed over the feature dimension and averaged over the batch.

use crate::linalg::{
    gaussian_matrix, polar_project, random_spd, DenseMatrix, LinalgError, SeededRng, SpdMatrix,
};
use crate::optim::{LayerBatch, OptimError};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ProblemError {
    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// A chain of square weight matrices `W_1 ... W_k`, all `n x n`.
#[derive(Debug, Clone)]
pub struct LinearChainModel {
    layers: Vec<DenseMatrix>,
    init_scale: f64,
}

impl LinearChainModel {
    /// Standard initialization: every entry `N(0, 1) / sqrt(n)`.
    pub fn init(rng: &mut SeededRng, depth: usize, n: usize) -> Self {
        let scale = 1.0 / (n as f64).sqrt();
        Self::init_scaled(rng, depth, n, scale)
    }

    pub fn init_scaled(rng: &mut SeededRng, depth: usize, n: usize, init_scale: f64) -> Self {
        assert!(depth >= 1, "a chain needs at least one layer");
        let layers = (0..depth)
            .map(|_| gaussian_matrix(rng, n, n, init_scale))
            .collect();
        Self { layers, init_scale }
    }

    pub fn from_layers(layers: Vec<DenseMatrix>) -> Self {
        assert!(!layers.is_empty());
        let n = layers[0].rows();
        for w in &layers {
            assert_eq!(w.shape(), (n, n), "all layers must be square and same size");
        }
        Self {
            layers,
            init_scale: 0.0,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn init_scale(&self) -> f64 {
        self.init_scale
    }

    pub fn layers(&self) -> &[DenseMatrix] {
        &self.layers
    }

    pub fn layer_mut(&mut self, index: usize) -> &mut DenseMatrix {
        &mut self.layers[index]
    }

    pub fn set_layer(&mut self, index: usize, w: DenseMatrix) {
        assert_eq!(w.shape(), self.layers[index].shape());
        self.layers[index] = w;
    }

    /// `X W_1 ... W_k`.
    pub fn forward(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut h = x.clone();
        for w in &self.layers {
            h = h.matmul(w);
        }
        h
    }

    /// The collapsed product `W_1 W_2 ... W_k`.
    pub fn product(&self) -> DenseMatrix {
        let mut p = self.layers[0].clone();
        for w in &self.layers[1..] {
            p = p.matmul(w);
        }
        p
    }

    /// Frobenius norm of the stacked weights `sqrt(sum_l ||W_l||_F^2)`.
    pub fn weight_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|w| {
                let f = w.frobenius_norm();
                f * f
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|w| w.is_finite())
    }
}

/// Problem family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ProblemKind {
    /// Gradient is fresh Gaussian noise, independent of the model output.
    #[serde(rename = "pure_noise")]
    PureNoise,
    /// `x ~ N(0, I)`, targets `T = X A` with Gaussian `A`.
    #[serde(rename = "deep_regression")]
    DeepRegression,
    /// `x = z Sigma` for SPD `Sigma`, targets `T = X A`.
    #[serde(rename = "sigma_regression")]
    SigmaRegression,
}

impl std::str::FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pure_noise" | "purenoise" => Ok(ProblemKind::PureNoise),
            "deep_regression" | "regression" => Ok(ProblemKind::DeepRegression),
            "sigma_regression" => Ok(ProblemKind::SigmaRegression),
            other => Err(format!("unknown problem kind '{other}'")),
        }
    }
}

/// A sampled problem: dimensions plus the fixed matrices that define it.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub kind: ProblemKind,
    pub n: usize,
    /// Target map (regression kinds), applied on the right: `T = X A`.
    pub a: Option<DenseMatrix>,
    /// SPD input covariance root (`SigmaRegression` only).
    pub sigma: Option<SpdMatrix>,
    pub batch_size: usize,
}

impl ProblemInstance {
    pub fn pure_noise(n: usize, batch_size: usize) -> Self {
        Self {
            kind: ProblemKind::PureNoise,
            n,
            a: None,
            sigma: None,
            batch_size,
        }
    }

    pub fn deep_regression(rng: &mut SeededRng, n: usize, batch_size: usize) -> Self {
        Self {
            kind: ProblemKind::DeepRegression,
            n,
            a: Some(gaussian_matrix(rng, n, n, 1.0)),
            sigma: None,
            batch_size,
        }
    }

    pub fn sigma_regression(
        rng: &mut SeededRng,
        n: usize,
        batch_size: usize,
        condition: f64,
    ) -> Self {
        Self {
            kind: ProblemKind::SigmaRegression,
            n,
            a: Some(gaussian_matrix(rng, n, n, 1.0)),
            sigma: Some(random_spd(rng, n, condition)),
            batch_size,
        }
    }

    /// Draws one input batch of the configured size.
    pub fn sample_inputs(&self, rng: &mut SeededRng) -> DenseMatrix {
        self.sample_inputs_sized(rng, self.batch_size)
    }

    pub fn sample_inputs_sized(&self, rng: &mut SeededRng, batch: usize) -> DenseMatrix {
        match (self.kind, &self.sigma) {
            (ProblemKind::SigmaRegression, Some(sigma)) => {
                gaussian_matrix(rng, batch, self.n, 1.0).matmul(sigma.mat())
            }
            _ => gaussian_matrix(rng, batch, self.n, 1.0),
        }
    }

    /// Regression targets `T = X A`; `None` for the pure-noise problem.
    pub fn targets(&self, x: &DenseMatrix) -> Option<DenseMatrix> {
        self.a.as_ref().map(|a| x.matmul(a))
    }
}

/// Where the output gradient comes from during the backward pass.
pub enum GradSource<'a> {
    /// Fresh `Z ~ N(0, I)` per call, independent of the output.
    PureNoise(&'a mut SeededRng),
    /// Mean-squared-error regression against fixed targets.
    Regression { target: &'a DenseMatrix },
}

/// Everything the backward pass saw: one `(X_l, G_l)` pair per layer plus
/// the loss value.
#[derive(Debug, Clone)]
pub struct ForwardBackwardTrace {
    pub layers: Vec<LayerBatch>,
    pub loss: f64,
}

impl ForwardBackwardTrace {
    /// The per-layer gradient `X_l^T G_l / b`.
    pub fn layer_gradient(&self, layer: usize) -> DenseMatrix {
        self.layers[layer].mean_gradient()
    }
}

/// Manual forward/backward through the chain.
///
/// Forward: `h_0 = X`, `h_l = h_{l-1} W_l`. Backward: `G_k` from the
/// gradient source, then `G_{l-1} = G_l W_l^T`. Layer `l` sees the batch
/// `(X_l = h_{l-1}, G_l)`.
pub fn forward_backward(
    model: &LinearChainModel,
    x_batch: &DenseMatrix,
    grad_source: GradSource<'_>,
) -> Result<ForwardBackwardTrace, ProblemError> {
    let n = model.dim();
    if x_batch.cols() != n {
        return Err(ProblemError::DimensionMismatch {
            detail: format!("inputs have {} columns, model expects {}", x_batch.cols(), n),
        });
    }
    let batch = x_batch.rows() as f64;

    let mut activations = Vec::with_capacity(model.depth() + 1);
    activations.push(x_batch.clone());
    for w in model.layers() {
        let next = activations.last().unwrap().matmul(w);
        activations.push(next);
    }
    let output = activations.last().unwrap();

    let (mut grad, loss) = match grad_source {
        GradSource::PureNoise(rng) => {
            let z = pure_noise_grad(output, rng);
            let loss = output.dot(&z) / batch;
            (z, loss)
        }
        GradSource::Regression { target } => {
            let g = regression_grad(output, target)?;
            let loss = 0.5 * g.dot(&g) / batch;
            (g, loss)
        }
    };

    let mut grads_rev = vec![grad.clone()];
    for w in model.layers().iter().skip(1).rev() {
        grad = grad.mul_a_bt(w);
        grads_rev.push(grad.clone());
    }

    let mut layers = Vec::with_capacity(model.depth());
    for (l, g) in grads_rev.into_iter().rev().enumerate() {
        layers.push(LayerBatch::new(activations[l].clone(), g)?);
    }
    Ok(ForwardBackwardTrace { layers, loss })
}

/// Pure-noise output gradient: fresh `Z ~ N(0, I)` of the output's shape,
/// independent of the output values.
pub fn pure_noise_grad(y_batch: &DenseMatrix, rng: &mut SeededRng) -> DenseMatrix {
    gaussian_matrix(rng, y_batch.rows(), y_batch.cols(), 1.0)
}

/// Gradient of `1/2 ||y - target||^2` (summed over features, averaged over
/// the batch downstream): simply `y - target`.
pub fn regression_grad(
    y_batch: &DenseMatrix,
    target_batch: &DenseMatrix,
) -> Result<DenseMatrix, ProblemError> {
    if y_batch.shape() != target_batch.shape() {
        return Err(ProblemError::DimensionMismatch {
            detail: format!(
                "output is {}x{} but target is {}x{}",
                y_batch.rows(),
                y_batch.cols(),
                target_batch.rows(),
                target_batch.cols()
            ),
        });
    }
    Ok(y_batch.sub(target_batch))
}

/// Mean squared error of the model against targets `X A`, scaled so the
/// all-zeros predictor scores exactly 10 on the same evaluation batch.
pub fn scaled_loss(model: &LinearChainModel, eval_x: &DenseMatrix, a: &DenseMatrix) -> f64 {
    let target = eval_x.matmul(a);
    let residual = model.forward(eval_x).sub(&target);
    let b = eval_x.rows() as f64;
    let mse = 0.5 * residual.dot(&residual) / b;
    let zero_mse = 0.5 * target.dot(&target) / b;
    10.0 * mse / zero_mse
}

/// Closed forms for the very first optimizer step on the `W = 0` regression
/// with inputs `x = z Sigma` and targets `T = X A` (large-batch limit):
/// Adam steps along `sgn(Sigma^2 A)`, Iso along the polar projection of
/// `Sigma A`. Comparisons against actual steps must flip the update's sign,
/// since the implemented first-step gradient is minus the target.
pub fn first_step_closed_forms(
    sigma: &SpdMatrix,
    a: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix), ProblemError> {
    let sigma_a = sigma.mat().matmul(a);
    let adam = sigma.mat().matmul(&sigma_a).map(|v| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    });
    let iso = polar_project(&sigma_a)?;
    Ok((adam, iso))
}
