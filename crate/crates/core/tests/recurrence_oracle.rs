//! From-scratch recomputation of the IsoAdam recurrences as an oracle.
//!
//! The production path keeps running EMA state and warm-started eigenbases.
//! The oracle here stores the entire batch history and recomputes every
//! quantity by explicit weighted sums and cold eigendecompositions, then
//! checks the per-step updates agree. Any drift in the state recurrences,
//! the bias denominators, or the preconditioner refresh shows up as a
//! mismatch.

use iso_opt::linalg::{gaussian_matrix, ridge, sym_pow, DenseMatrix, SeededRng};
use iso_opt::optim::{
    iso_step, isoadam_step, LayerBatch, OptimizerConfig, OptimizerKind, OptimizerState,
};

struct HistoryOracle {
    grads: Vec<DenseMatrix>,
    input_covs: Vec<DenseMatrix>,
    grad_covs: Vec<DenseMatrix>,
    whitened: Vec<DenseMatrix>,
    config: OptimizerConfig,
}

impl HistoryOracle {
    fn new(config: OptimizerConfig) -> Self {
        Self {
            grads: Vec::new(),
            input_covs: Vec::new(),
            grad_covs: Vec::new(),
            whitened: Vec::new(),
            config,
        }
    }

    /// EMA by explicit sum: `(1 - beta) * sum_i beta^(t-i) * x_i` for
    /// `i = 1..=t` (zero-initialized recurrence unrolled).
    fn ema(items: &[DenseMatrix], beta: f64) -> DenseMatrix {
        let t = items.len();
        let mut acc = DenseMatrix::zeros(items[0].rows(), items[0].cols());
        for (i, item) in items.iter().enumerate() {
            let weight = (1.0 - beta) * beta.powi((t - 1 - i) as i32);
            acc = acc.add(&item.scaled(weight));
        }
        acc
    }

    fn inv_sqrt(&self, cov: &DenseMatrix) -> DenseMatrix {
        let ridged = ridge(cov, self.config.ridge_rel, self.config.ridge_abs).unwrap();
        sym_pow(&ridged, -0.5).unwrap()
    }

    /// Records the batch and recomputes the step-`t` update from scratch.
    fn step(&mut self, batch: &LayerBatch) -> DenseMatrix {
        self.grads.push(batch.mean_gradient());
        self.input_covs.push(batch.input_covariance());
        self.grad_covs.push(batch.grad_covariance());
        let t = self.grads.len();
        let beta1 = self.config.beta1;
        let beta2 = self.config.beta2;

        let m = Self::ema(&self.grads, beta1);
        let l = Self::ema(&self.input_covs, beta1);
        let r = Self::ema(&self.grad_covs, beta1);
        let d1 = 1.0 - beta1.powi(t as i32);
        let d2 = 1.0 - beta2.powi(t as i32);

        let left = self.inv_sqrt(&l);
        let right = self.inv_sqrt(&r);
        let u = left
            .matmul(self.grads.last().unwrap())
            .matmul(&right)
            .scaled(d1);
        self.whitened.push(u.map(|v| v * v));
        let v = Self::ema(&self.whitened, beta2);

        let numerator = left.matmul(&m).matmul(&right);
        let mut update = DenseMatrix::zeros(numerator.rows(), numerator.cols());
        for ((o, nu), vv) in update
            .data_mut()
            .iter_mut()
            .zip(numerator.data())
            .zip(v.data())
        {
            *o = nu / ((vv / d2).sqrt() + self.config.epsilon);
        }
        update
    }
}

#[test]
fn isoadam_matches_history_oracle_step_by_step() {
    let n = 6;
    let m = 5;
    let b = 48;
    let mut config = OptimizerConfig::new(OptimizerKind::IsoAdam, 0.1);
    config.beta1 = 0.9;
    config.beta2 = 0.97;

    let mut state = OptimizerState::new(n, m);
    let mut oracle = HistoryOracle::new(config.clone());
    let mut rng = SeededRng::new(4242);

    for step in 1..=60 {
        let x = gaussian_matrix(&mut rng, b, n, 1.0);
        let g = gaussian_matrix(&mut rng, b, m, 1.0);
        let batch = LayerBatch::new(x, g).unwrap();

        let actual = isoadam_step(&mut state, &batch, &config).unwrap();
        assert_eq!(state.left_covariance().asymmetry(), 0.0, "L must stay symmetric");
        assert_eq!(state.right_covariance().asymmetry(), 0.0, "R must stay symmetric");
        assert!(state.second_moment().data().iter().all(|&v| v >= 0.0));
        let expected = oracle.step(&batch);
        let scale = expected.frobenius_norm().max(1.0);
        let err = actual.sub(&expected).frobenius_norm() / scale;
        assert!(
            err < 1e-8,
            "step {step}: recurrence drift {err:.3e} from history oracle"
        );
    }
    // The closed-form denominators hold exactly throughout.
    let mut p1 = 1.0_f64;
    let mut p2 = 1.0_f64;
    for _ in 0..60 {
        p1 *= config.beta1;
        p2 *= config.beta2;
    }
    assert_eq!(state.d1(), 1.0 - p1);
    assert_eq!(state.d2(), 1.0 - p2);
}

/// On a stationary input stream the IsoAdam update is exactly the Iso update
/// normalized entrywise by the RMS of recent whitened gradients (the state
/// recurrences of the two optimizers coincide on M, L, R).
#[test]
fn isoadam_is_rms_normalized_iso() {
    let n = 5;
    let b = 64;
    let config_iso = OptimizerConfig::new(OptimizerKind::Iso, 0.1);
    let mut config_ia = OptimizerConfig::new(OptimizerKind::IsoAdam, 0.1);
    config_ia.beta2 = 0.99;

    let mut iso_state = OptimizerState::new(n, n);
    let mut ia_state = OptimizerState::new(n, n);
    let mut rng = SeededRng::new(7);

    for _ in 0..200 {
        let x = gaussian_matrix(&mut rng, b, n, 1.0);
        let g = gaussian_matrix(&mut rng, b, n, 1.0);
        let batch = LayerBatch::new(x, g).unwrap();
        let iso_update = iso_step(&mut iso_state, &batch, &config_iso).unwrap();
        let ia_update = isoadam_step(&mut ia_state, &batch, &config_ia).unwrap();

        // Denominator implied by the IsoAdam state: sqrt(V/d2) + eps.
        for ((ia, iso), v) in ia_update
            .data()
            .iter()
            .zip(iso_update.data())
            .zip(ia_state.second_moment().data())
        {
            let denom = (v / ia_state.d2()).sqrt() + config_ia.epsilon;
            let rebuilt = iso / denom;
            assert!(
                (ia - rebuilt).abs() <= 1e-10 * rebuilt.abs().max(1.0),
                "IsoAdam update is not RMS-normalized Iso: {ia} vs {rebuilt}"
            );
        }
    }
}
