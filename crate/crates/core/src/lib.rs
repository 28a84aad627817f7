//! Matrix-preconditioned stochastic optimizers and a desk-scale experiment
//! harness.
//!
//! The crate is organized in four layers:
//!
//! - [`linalg`]: dense double-precision linear algebra with no external BLAS —
//!   symmetric eigendecomposition (cyclic Jacobi), fractional matrix powers,
//!   a coupled Newton–Schulz inverse square root, polar projection, and
//!   seeded Gaussian sampling.
//! - [`optim`]: six optimizers behind one per-weight-matrix step interface
//!   consuming `(X, G)` batches of layer inputs and output gradients: SGD,
//!   sign descent, Adam, Iso, IsoAdam, and Shampoo.
//! - [`problems`]: synthetic problem generators (pure-noise chains and
//!   overparameterized linear regression) with exact manual forward/backward.
//! - [`harness`]: learning-rate sweeps, convergence/divergence detection,
//!   seed fan-out, and the runtime property-check suite.
//!
//! All randomness flows through [`linalg::SeededRng`] (ChaCha8 keyed by a
//! 64-bit seed, Gaussian variates via the ziggurat sampler), so every result
//! in the crate is bit-reproducible for a fixed seed.

pub mod harness;
pub mod linalg;
pub mod optim;
pub mod problems;

pub use linalg::{DenseMatrix, Eigendecomposition, LinalgError, SeededRng, SpdMatrix};
pub use optim::{LayerBatch, OptimError, Optimizer, OptimizerConfig, OptimizerKind, OptimizerState};
