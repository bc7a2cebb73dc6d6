//! Differentiable causal discovery with interpretable causal strengths.
//!
//! This crate learns directed acyclic graphs from observational data by
//! constrained continuous optimization. The weighted adjacency matrix it
//! reports is the root-mean-square Jacobian of the learned structural
//! equations (the DCE adjacency), so entry `(i, j)` is an estimate of how
//! strongly `x_i` drives `x_j` in the units of the data — unlike
//! first-layer weight norms, which can be arbitrarily far from the actual
//! derivative magnitude (see the [`lemmas`] module for executable
//! demonstrations).
//!
//! The main pieces:
//!
//! - [`graphs`]: DAG representation, random DAG sampling, thresholding.
//! - [`synthdata`]: ground-truth SEM generation (linear, GP-additive,
//!   random-MLP) and dataset simulation.
//! - [`models`]: differentiable per-node regressors (linear, MLP, kernel
//!   ridge) with analytic batch Jacobians and parameter gradients.
//! - [`objective`]: the DCE adjacency, its L1 penalty, and the assembled
//!   penalized score with exact gradients.
//! - [`acyclicity`]: the log-det acyclicity function, its gradient, and
//!   M-matrix feasibility checks.
//! - [`solver`]: central-path optimization with Adam, feasibility backoff,
//!   pre-training, and the first-layer-norm baseline fit.
//! - [`metrics`]: SHD, SID, precision/recall/F1, rank correlations.
//! - [`lemmas`]: constructive witnesses that first-layer norms are not
//!   interpretable as causal strengths.
//! - [`cli`]: file formats and the command surface behind the `dagma-dce`
//!   binary (`gen`, `fit`, `eval`, `bench`, `lemma`).
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability.

pub mod acyclicity;
pub mod cli;
pub mod graphs;
pub mod lemmas;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod objective;
pub mod solver;
pub mod synthdata;

pub use graphs::{BinaryDag, ThresholdScheme, WeightedAdjacency};
pub use models::{
    DifferentiableSemModel, JacobianBatch, KernelRidgeSemModel, LinearSemModel, MlpSemModel,
};
pub use solver::{CentralPathConfig, DiscoveryResult};
