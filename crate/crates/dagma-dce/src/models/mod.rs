//! Differentiable per-node regressors and the model contract the
//! objective and solver are written against.
//!
//! A model holds `d` regressors `f_1, ..., f_d`, each mapping the full
//! `d`-dimensional input to one output. Nothing masks a regressor's own
//! input; suppressing self- and cyclic dependence is the acyclicity
//! constraint's job, not the architecture's. Every model exposes:
//!
//! - `forward`: batched prediction, column `j` is `f_j` applied row-wise;
//! - `jacobian_batch`: exact analytic Jacobians, `J[n][j][i] = ∂f_j/∂x_i`
//!   at sample `n`;
//! - `vjp_jacobian_params`: the parameter gradient of `<G, J(θ)>` for an
//!   arbitrary cotangent `G` — the second-order quantity that lets the
//!   acyclicity constraint and the Jacobian L1 penalty be differentiated
//!   with respect to θ;
//! - `grad_params_mse`: the `1/(2N) Σ ||x_n - f(x_n)||²` score and its
//!   gradient.
//!
//! All arithmetic is f64. Heavy passes parallelize per regressor, each
//! internally sequential, and per-regressor results combine in node
//! order — so outputs are bit-identical at any thread count.

mod kernel;
mod linear;
mod mlp;

pub use kernel::KernelRidgeSemModel;
pub use linear::LinearSemModel;
pub use mlp::{Activation, MlpSemModel, NodeMlp};

use crate::graphs::WeightedAdjacency;
use ndarray::{Array1, Array3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("operation requires an MLP model, got {got}")]
    UnsupportedModel { got: &'static str },
    #[error("non-finite output from regressor {node} at sample {sample}")]
    NonFiniteOutput { node: usize, sample: usize },
    #[error("non-finite Jacobian entry from regressor {node} at sample {sample}")]
    NonFiniteJacobian { node: usize, sample: usize },
    #[error("input has {got} columns, model expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("checkpoint does not match model: {0}")]
    CheckpointMismatch(String),
}

/// Batch of Jacobians, laid out `[n][j][i] = ∂f_j/∂x_i` at sample `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBatch {
    pub values: Array3<f64>,
}

impl JacobianBatch {
    pub fn new(values: Array3<f64>) -> Self {
        let (_, j, i) = values.dim();
        assert_eq!(j, i, "Jacobian batch must be N×d×d");
        Self { values }
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self { values: Array3::zeros((n, d, d)) }
    }

    pub fn n_samples(&self) -> usize {
        self.values.dim().0
    }

    pub fn d(&self) -> usize {
        self.values.dim().1
    }
}

/// Contract shared by every learnable model the solver can fit.
///
/// `forward` and `jacobian_batch` are deterministic functions of
/// `(θ, X)`; parameter access is through a flat vector whose layout is
/// fixed per model family (documented on each implementation).
pub trait DifferentiableSemModel: Send + Sync {
    /// Number of observed variables `d`.
    fn dim(&self) -> usize;

    /// Length of the flat parameter vector.
    fn num_params(&self) -> usize;

    /// Flat copy of θ.
    fn params(&self) -> Array1<f64>;

    /// Overwrites θ from a flat vector (inverse of [`Self::params`]).
    fn set_params(&mut self, theta: &[f64]);

    /// Batched prediction; column `j` of the result is `f_j` row-wise.
    fn forward(&self, x: &ndarray::Array2<f64>) -> Result<ndarray::Array2<f64>, ModelError>;

    /// Exact analytic Jacobians at every sample.
    fn jacobian_batch(&self, x: &ndarray::Array2<f64>) -> Result<JacobianBatch, ModelError>;

    /// Gradient over θ of the full contraction `Σ_{n,j,i} G[n][j][i] · J[n][j][i]`.
    fn vjp_jacobian_params(&self, x: &ndarray::Array2<f64>, cotangent: &Array3<f64>) -> Array1<f64>;

    /// `(1/(2N)) Σ_n ||x_n - f(x_n)||²` and its θ-gradient.
    fn grad_params_mse(&self, x: &ndarray::Array2<f64>) -> (f64, Array1<f64>);

    /// Serializable snapshot of the model (family, dims, θ); round-trips
    /// bit-exactly through JSON.
    fn checkpoint(&self) -> ModelCheckpoint;

    /// Downcast hook for MLP-only operations.
    fn as_mlp(&self) -> Option<&MlpSemModel> {
        None
    }
}

/// First-layer-norm adjacency: entry `(i, j)` is the L2 norm of the
/// first-layer weight column of regressor `j` that multiplies input `i`.
/// This is the baseline's notion of edge weight.
pub fn first_layer_norms(model: &dyn DifferentiableSemModel) -> Result<WeightedAdjacency, ModelError> {
    match model.as_mlp() {
        Some(mlp) => Ok(mlp.first_layer_norms()),
        None => Err(ModelError::UnsupportedModel { got: model.checkpoint().family_name() }),
    }
}

/// Sum of absolute first-layer weights — the baseline's sparsity penalty.
pub fn l1_first_layer(model: &dyn DifferentiableSemModel) -> Result<f64, ModelError> {
    match model.as_mlp() {
        Some(mlp) => Ok(mlp.l1_first_layer()),
        None => Err(ModelError::UnsupportedModel { got: model.checkpoint().family_name() }),
    }
}

/// On-disk snapshot of a model: layout descriptor plus flat θ. JSON
/// serialization round-trips f64 values bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelCheckpoint {
    Linear {
        d: usize,
        theta: Vec<f64>,
    },
    Mlp {
        d: usize,
        hidden: Vec<usize>,
        activation: Activation,
        biases: bool,
        theta: Vec<f64>,
    },
    KernelRidge {
        d: usize,
        inducing: Vec<Vec<f64>>,
        lengthscales: Vec<Vec<f64>>,
        theta: Vec<f64>,
    },
}

impl ModelCheckpoint {
    pub fn family_name(&self) -> &'static str {
        match self {
            ModelCheckpoint::Linear { .. } => "linear",
            ModelCheckpoint::Mlp { .. } => "mlp",
            ModelCheckpoint::KernelRidge { .. } => "kernel_ridge",
        }
    }

    /// Reconstructs the model this checkpoint was taken from.
    pub fn restore(&self) -> Result<Box<dyn DifferentiableSemModel>, ModelError> {
        match self {
            ModelCheckpoint::Linear { d, theta } => {
                let mut m = LinearSemModel::zeros(*d);
                if theta.len() != m.num_params() {
                    return Err(ModelError::CheckpointMismatch(format!(
                        "linear d={d} expects {} params, got {}",
                        m.num_params(),
                        theta.len()
                    )));
                }
                m.set_params(theta);
                Ok(Box::new(m))
            }
            ModelCheckpoint::Mlp { d, hidden, activation, biases, theta } => {
                let mut m = MlpSemModel::zeros(*d, hidden.clone(), *activation, *biases);
                if theta.len() != m.num_params() {
                    return Err(ModelError::CheckpointMismatch(format!(
                        "mlp d={d} hidden={hidden:?} expects {} params, got {}",
                        m.num_params(),
                        theta.len()
                    )));
                }
                m.set_params(theta);
                Ok(Box::new(m))
            }
            ModelCheckpoint::KernelRidge { d, inducing, lengthscales, theta } => {
                let m = KernelRidgeSemModel::from_checkpoint(*d, inducing, lengthscales, theta)?;
                Ok(Box::new(m))
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use ndarray::{Array1, Array2, Array3};
    use rand::Rng;

    /// Central finite differences of a scalar function of θ.
    pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(
        theta: &Array1<f64>,
        step: f64,
        mut f: F,
    ) -> Array1<f64> {
        let mut grad = Array1::zeros(theta.len());
        let mut work = theta.to_vec();
        for k in 0..theta.len() {
            let orig = work[k];
            work[k] = orig + step;
            let fp = f(&work);
            work[k] = orig - step;
            let fm = f(&work);
            work[k] = orig;
            grad[k] = (fp - fm) / (2.0 * step);
        }
        grad
    }

    /// Largest relative disagreement between two gradients, with an
    /// absolute floor so near-zero entries compare sanely.
    pub fn max_rel_err(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b.iter())
            .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    pub fn random_matrix<R: Rng>(n: usize, d: usize, scale: f64, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |_| rng.gen_range(-scale..scale))
    }

    pub fn random_cotangent<R: Rng>(n: usize, d: usize, rng: &mut R) -> Array3<f64> {
        Array3::from_shape_fn((n, d, d), |_| rng.gen_range(-1.0..1.0))
    }
}
