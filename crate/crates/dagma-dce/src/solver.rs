//! Central-path constrained optimization: a sequence of Adam-solved
//! subproblems `min μ_t · score(θ) + h(A(θ), s_t)` with decreasing path
//! coefficient μ and a feasibility-preserving backoff. Two objectives run
//! through the same loop: the DCE score (RMS-Jacobian adjacency) and the
//! baseline score (first-layer-norm adjacency with first-layer L1).
//!
//! Every accepted iterate stays inside the M-matrix region: a step whose
//! adjacency leaves it is reverted and the stage learning rate halves, up
//! to ten times before the stage aborts at the last feasible θ. The
//! feasible set is open, so a small enough step from a feasible point is
//! always feasible again.

use crate::acyclicity::{self, HValue, InfeasibleReason};
use crate::graphs::WeightedAdjacency;
use crate::models::{DifferentiableSemModel, ModelCheckpoint, ModelError};
use crate::objective::{self, ObjectiveError, ScoreBreakdown};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("initial parameters are infeasible: {0:?}")]
    InfeasibleInit(InfeasibleReason),
    #[error("model error during setup: {0}")]
    Model(#[from] ModelError),
    #[error("solver stalled: every stage exhausted its backoff budget without accepting a step")]
    Stalled { trace: Vec<TraceRecord> },
    #[error("invalid config: {0}")]
    Config(String),
}

/// Central-path hyperparameters. `stages` must equal the length of
/// `s_schedule`; `mu` starts at `mu_init` and multiplies by `mu_decay`
/// between stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralPathConfig {
    pub stages: usize,
    pub mu_init: f64,
    pub mu_decay: f64,
    pub s_schedule: Vec<f64>,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_iters_per_stage: usize,
    /// Keep an intermediate checkpoint every this many accepted steps
    /// (0 = final checkpoint only).
    pub checkpoint_every: usize,
    /// Jacobian L1 weight for the DCE objective.
    pub lambda1: f64,
    /// First-layer L1 weight for the baseline objective.
    pub lambda1_baseline: f64,
    /// Baseline weight decay; enters the gradient only (decoupled).
    pub lambda2_baseline: f64,
    /// Warm-start the DCE fit with one stage of the baseline objective.
    pub pretrain: bool,
    pub pretrain_iters: usize,
    /// A stage also ends once the best objective has not improved by
    /// `stall_improvement` for `stall_window` accepted steps. The window
    /// must outlast the first-moment turnaround (~2.3/(1-beta1) steps),
    /// or regime shifts read as convergence.
    pub stall_window: usize,
    pub stall_improvement: f64,
    pub seed: u64,
}

impl CentralPathConfig {
    /// Defaults for the DCE fit. Iteration budget is a tenth of the
    /// baseline's, offset by the pre-training stage.
    pub fn default_dce() -> Self {
        Self {
            stages: 4,
            mu_init: 1.0,
            mu_decay: 0.1,
            s_schedule: vec![1.0, 0.9, 0.8, 0.7],
            lr: 2e-4,
            adam_beta1: 0.99,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_iters_per_stage: 700,
            checkpoint_every: 0,
            lambda1: 3.5e-2,
            lambda1_baseline: 0.02,
            lambda2_baseline: 0.005,
            pretrain: true,
            pretrain_iters: 7000,
            stall_window: 400,
            stall_improvement: 1e-8,
            seed: 0,
        }
    }

    /// Defaults for the baseline fit.
    pub fn default_baseline() -> Self {
        Self {
            max_iters_per_stage: 7000,
            pretrain: false,
            ..Self::default_dce()
        }
    }

    fn validate(&self) -> Result<(), SolverError> {
        if self.stages == 0 {
            return Err(SolverError::Config("stages must be >= 1".into()));
        }
        if self.s_schedule.len() != self.stages {
            return Err(SolverError::Config(format!(
                "s_schedule has {} entries for {} stages",
                self.s_schedule.len(),
                self.stages
            )));
        }
        if self.s_schedule.iter().any(|&s| s <= 0.0) {
            return Err(SolverError::Config("s values must be positive".into()));
        }
        if !(self.mu_init > 0.0) || !(0.0..1.0).contains(&self.mu_decay) {
            return Err(SolverError::Config("need mu_init > 0 and mu_decay in (0,1)".into()));
        }
        if !(self.lr > 0.0) {
            return Err(SolverError::Config("lr must be positive".into()));
        }
        if self.lambda1 < 0.0 || self.lambda1_baseline < 0.0 || self.lambda2_baseline < 0.0 {
            return Err(SolverError::Config("penalty weights must be nonnegative".into()));
        }
        Ok(())
    }
}

impl Default for CentralPathConfig {
    fn default() -> Self {
        Self::default_dce()
    }
}

/// One accepted iteration in the trace log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub stage: usize,
    pub iter: usize,
    pub lr: f64,
    pub score: ScoreBreakdown,
}

/// Outcome of a fit. For baseline fits `adjacency` is the first-layer
/// adjacency (what the baseline thresholds) and `dce_adjacency` is the
/// RMS-Jacobian adjacency at the same θ; DCE fits carry the same matrix
/// in both.
#[derive(Debug, Clone)]
pub struct DiscoveryResult {
    pub adjacency: WeightedAdjacency,
    pub dce_adjacency: WeightedAdjacency,
    pub checkpoint: ModelCheckpoint,
    pub intermediate_checkpoints: Vec<(usize, usize, ModelCheckpoint)>,
    pub trace: Vec<TraceRecord>,
    pub wall_time_s: f64,
    pub config: CentralPathConfig,
    pub feasibility_incidents: usize,
    pub accepted_iters: usize,
}

/// Adam moment state; bias correction uses the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Array1<f64>,
    pub v: Array1<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(dim: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { m: Array1::zeros(dim), v: Array1::zeros(dim), step: 0, beta1, beta2, eps }
    }
}

/// One bias-corrected Adam update; returns the new θ.
pub fn adam_step(state: &mut AdamState, theta: &Array1<f64>, grad: &Array1<f64>, lr: f64) -> Array1<f64> {
    state.step += 1;
    let b1 = state.beta1;
    let b2 = state.beta2;
    ndarray::Zip::from(&mut state.m).and(grad).for_each(|m, &g| *m = b1 * *m + (1.0 - b1) * g);
    ndarray::Zip::from(&mut state.v).and(grad).for_each(|v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
    let corr1 = 1.0 - b1.powi(state.step as i32);
    let corr2 = 1.0 - b2.powi(state.step as i32);
    let mut theta_new = theta.clone();
    ndarray::Zip::from(&mut theta_new)
        .and(&state.m)
        .and(&state.v)
        .for_each(|t, &m, &v| {
            let m_hat = m / corr1;
            let v_hat = v / corr2;
            *t -= lr * m_hat / (v_hat.sqrt() + state.eps);
        });
    theta_new
}

/// Which score the central path minimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
enum ObjectiveKind {
    Dce,
    Baseline,
}

fn evaluate(
    kind: ObjectiveKind,
    model: &dyn DifferentiableSemModel,
    x: &Array2<f64>,
    config: &CentralPathConfig,
    mu: f64,
    s: f64,
) -> Result<(ScoreBreakdown, Array1<f64>), ObjectiveError> {
    match kind {
        ObjectiveKind::Dce => objective::evaluate_objective(model, x, config.lambda1, mu, s),
        ObjectiveKind::Baseline => {
            let mlp = model.as_mlp().ok_or(ModelError::UnsupportedModel {
                got: model.checkpoint().family_name(),
            })?;
            let (mse, grad_mse) = model.grad_params_mse(x);
            let adjacency = mlp.first_layer_norms();
            let h_value = match acyclicity::h_dagma(&adjacency, s) {
                HValue::Feasible(v) => v,
                HValue::Infeasible(r) => return Err(ObjectiveError::Infeasible(r)),
            };
            let d_adj = acyclicity::grad_h_dagma(&adjacency, s)
                .map_err(ObjectiveError::Infeasible)?;
            let grad_h = mlp.first_layer_norms_vjp(&d_adj);
            let l1 = mlp.l1_first_layer();
            let grad_l1 = mlp.l1_first_layer_subgradient();
            let lambda1 = config.lambda1_baseline;
            let total = mu * (mse + lambda1 * l1) + h_value;
            // Weight decay is decoupled: it steers θ but is not part of
            // the reported score.
            let theta = model.params();
            let grad = (grad_mse + grad_l1 * lambda1 + theta * config.lambda2_baseline) * mu
                + grad_h;
            Ok((ScoreBreakdown { mse, l1_dce: l1, h_value, mu, total }, grad))
        }
    }
}

struct StageOutcome {
    accepted: usize,
    incidents: usize,
}

/// Runs one central-path stage in place, honoring the backoff policy.
#[allow(clippy::too_many_arguments)]
fn run_stage(
    kind: ObjectiveKind,
    model: &mut dyn DifferentiableSemModel,
    x: &Array2<f64>,
    config: &CentralPathConfig,
    stage: usize,
    mu: f64,
    s: f64,
    max_iters: usize,
    trace: &mut Vec<TraceRecord>,
    checkpoints: &mut Vec<(usize, usize, ModelCheckpoint)>,
) -> Result<StageOutcome, SolverError> {
    const MAX_HALVINGS: usize = 10;

    let mut theta = model.params();
    let mut state = AdamState::new(theta.len(), config.adam_beta1, config.adam_beta2, config.adam_eps);
    let mut lr = config.lr;
    let mut halvings = 0usize;
    let mut incidents = 0usize;
    let mut accepted = 0usize;
    // Tracking the best total (not the raw trajectory) keeps Adam's
    // momentum ringing from reading as convergence.
    let mut best_total = f64::INFINITY;
    let mut since_improvement = 0usize;

    let mut grad = match evaluate(kind, model, x, config, mu, s) {
        Ok((_, g)) => g,
        Err(ObjectiveError::Infeasible(r)) => {
            // Warm starts are feasible at the previous stage's s; a
            // shrinking s can still exclude them. Treated as a stage-level
            // incident and reported upward.
            return Err(SolverError::InfeasibleInit(r));
        }
        Err(ObjectiveError::Model(e)) => return Err(SolverError::Model(e)),
    };

    while accepted < max_iters {
        let saved_state = state.clone();
        let candidate = adam_step(&mut state, &theta, &grad, lr);
        model.set_params(candidate.as_slice().unwrap());
        match evaluate(kind, model, x, config, mu, s) {
            Ok((score, new_grad)) => {
                theta = candidate;
                grad = new_grad;
                accepted += 1;
                halvings = 0;
                trace.push(TraceRecord { stage, iter: accepted, lr, score });
                if config.checkpoint_every > 0 && accepted % config.checkpoint_every == 0 {
                    checkpoints.push((stage, accepted, model.checkpoint()));
                }
                if best_total - score.total >= config.stall_improvement {
                    best_total = score.total;
                    since_improvement = 0;
                } else {
                    since_improvement += 1;
                    if since_improvement >= config.stall_window {
                        break;
                    }
                }
            }
            Err(_) => {
                // Revert the step, halve the stage lr, try again.
                model.set_params(theta.as_slice().unwrap());
                state = saved_state;
                incidents += 1;
                halvings += 1;
                lr *= 0.5;
                if halvings > MAX_HALVINGS {
                    break;
                }
            }
        }
    }
    model.set_params(theta.as_slice().unwrap());
    Ok(StageOutcome { accepted, incidents })
}

fn run_central_path(
    kind: ObjectiveKind,
    model: &mut dyn DifferentiableSemModel,
    x: &Array2<f64>,
    config: &CentralPathConfig,
    started: Instant,
) -> Result<DiscoveryResult, SolverError> {
    config.validate()?;
    if x.ncols() != model.dim() {
        return Err(SolverError::Config(format!(
            "data has {} columns, model expects {}",
            x.ncols(),
            model.dim()
        )));
    }

    // Feasibility at θ0 is a precondition.
    match evaluate(kind, model, x, config, config.mu_init, config.s_schedule[0]) {
        Ok(_) => {}
        Err(ObjectiveError::Infeasible(r)) => return Err(SolverError::InfeasibleInit(r)),
        Err(ObjectiveError::Model(e)) => return Err(SolverError::Model(e)),
    }

    let mut trace = Vec::new();
    let mut checkpoints = Vec::new();
    let mut incidents = 0usize;
    let mut accepted_total = 0usize;
    let mut mu = config.mu_init;
    let mut any_progress = false;

    for stage in 0..config.stages {
        let s = config.s_schedule[stage];
        let outcome = run_stage(
            kind,
            model,
            x,
            config,
            stage,
            mu,
            s,
            config.max_iters_per_stage,
            &mut trace,
            &mut checkpoints,
        );
        match outcome {
            Ok(o) => {
                incidents += o.incidents;
                accepted_total += o.accepted;
                any_progress |= o.accepted > 0;
            }
            Err(SolverError::InfeasibleInit(r)) => {
                if stage == 0 {
                    return Err(SolverError::InfeasibleInit(r));
                }
                // The shrunken s excluded the warm start; stay at the
                // previous stage's s for this stage instead.
                incidents += 1;
                let fallback_s = config.s_schedule[stage - 1];
                let o = run_stage(
                    kind,
                    model,
                    x,
                    config,
                    stage,
                    mu,
                    fallback_s,
                    config.max_iters_per_stage,
                    &mut trace,
                    &mut checkpoints,
                )?;
                incidents += o.incidents;
                accepted_total += o.accepted;
                any_progress |= o.accepted > 0;
            }
            Err(e) => return Err(e),
        }
        mu *= config.mu_decay;
    }

    if !any_progress && config.max_iters_per_stage > 0 {
        return Err(SolverError::Stalled { trace });
    }

    let s_last = *config.s_schedule.last().unwrap();
    let (adjacency, dce_adjacency) = final_adjacencies(kind, model, x)?;
    debug_assert!(acyclicity::check_feasible(&adjacency, s_last).feasible || config.max_iters_per_stage == 0);

    Ok(DiscoveryResult {
        adjacency,
        dce_adjacency,
        checkpoint: model.checkpoint(),
        intermediate_checkpoints: checkpoints,
        trace,
        wall_time_s: started.elapsed().as_secs_f64(),
        config: config.clone(),
        feasibility_incidents: incidents,
        accepted_iters: accepted_total,
    })
}

fn final_adjacencies(
    kind: ObjectiveKind,
    model: &dyn DifferentiableSemModel,
    x: &Array2<f64>,
) -> Result<(WeightedAdjacency, WeightedAdjacency), SolverError> {
    let jac = model.jacobian_batch(x)?;
    let dce = objective::dce_adjacency(&jac);
    let primary = match kind {
        ObjectiveKind::Dce => dce.clone(),
        ObjectiveKind::Baseline => model
            .as_mlp()
            .ok_or(ModelError::UnsupportedModel { got: model.checkpoint().family_name() })?
            .first_layer_norms(),
    };
    Ok((primary, dce))
}

/// Fits the DCE objective along the central path. When `config.pretrain`
/// is set and the model is an MLP, one stage of the baseline objective
/// warm-starts θ first; wall time covers both phases.
pub fn fit_dagma_dce(
    x: &Array2<f64>,
    model: &mut dyn DifferentiableSemModel,
    config: &CentralPathConfig,
) -> Result<DiscoveryResult, SolverError> {
    let started = Instant::now();
    if config.pretrain && model.as_mlp().is_some() {
        pretrain_dagma(x, model, config)?;
    }
    run_central_path(ObjectiveKind::Dce, model, x, config, started)
}

/// One central-path stage of the baseline objective, warm-starting θ in
/// place. With `pretrain_iters = 0` this is the identity on θ.
pub fn pretrain_dagma(
    x: &Array2<f64>,
    model: &mut dyn DifferentiableSemModel,
    config: &CentralPathConfig,
) -> Result<usize, SolverError> {
    config.validate()?;
    if model.as_mlp().is_none() {
        return Err(SolverError::Model(ModelError::UnsupportedModel {
            got: model.checkpoint().family_name(),
        }));
    }
    let mut trace = Vec::new();
    let mut checkpoints = Vec::new();
    let outcome = run_stage(
        ObjectiveKind::Baseline,
        model,
        x,
        config,
        0,
        config.mu_init,
        config.s_schedule[0],
        config.pretrain_iters,
        &mut trace,
        &mut checkpoints,
    )?;
    Ok(outcome.accepted)
}

/// Fits the baseline objective (first-layer adjacency and first-layer L1
/// penalty) along the same central path. MLP models only.
pub fn fit_dagma_baseline(
    x: &Array2<f64>,
    model: &mut dyn DifferentiableSemModel,
    config: &CentralPathConfig,
) -> Result<DiscoveryResult, SolverError> {
    let started = Instant::now();
    if model.as_mlp().is_none() {
        return Err(SolverError::Model(ModelError::UnsupportedModel {
            got: model.checkpoint().family_name(),
        }));
    }
    run_central_path(ObjectiveKind::Baseline, model, x, config, started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Activation, LinearSemModel, MlpSemModel};
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn two_node_linear_data(beta: f64, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        for s in 0..n {
            let z0: f64 = StandardNormal.sample(&mut rng);
            let z1: f64 = StandardNormal.sample(&mut rng);
            x[(s, 0)] = z0;
            x[(s, 1)] = beta * x[(s, 0)] + z1;
        }
        x
    }

    #[test]
    fn adam_matches_reference_implementation() {
        // Independent reference: textbook update replayed by hand.
        let dim = 4;
        let mut state = AdamState::new(dim, 0.9, 0.999, 1e-8);
        let mut theta = Array1::from_vec(vec![0.5, -1.0, 2.0, 0.0]);
        let grads = [
            vec![0.1, -0.2, 0.3, 0.0],
            vec![-0.05, 0.4, 0.1, 1.0],
            vec![0.2, 0.2, -0.3, -0.5],
            vec![0.0, 0.0, 0.1, 0.2],
            vec![0.3, -0.1, 0.0, 0.4],
        ];
        let lr = 0.01;

        let mut ref_theta = vec![0.5, -1.0, 2.0, 0.0];
        let mut ref_m = vec![0.0; dim];
        let mut ref_v = vec![0.0; dim];
        for (t, g) in grads.iter().enumerate() {
            let step = (t + 1) as i32;
            for k in 0..dim {
                ref_m[k] = 0.9 * ref_m[k] + 0.1 * g[k];
                ref_v[k] = 0.999 * ref_v[k] + 0.001 * g[k] * g[k];
                let m_hat = ref_m[k] / (1.0 - 0.9_f64.powi(step));
                let v_hat = ref_v[k] / (1.0 - 0.999_f64.powi(step));
                ref_theta[k] -= lr * m_hat / (v_hat.sqrt() + 1e-8);
            }
            theta = adam_step(&mut state, &theta, &Array1::from_vec(g.clone()), lr);
        }
        for k in 0..dim {
            assert!((theta[k] - ref_theta[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_theta() {
        let mut state = AdamState::new(3, 0.9, 0.999, 1e-8);
        let theta = Array1::from_vec(vec![1.0, -2.0, 0.5]);
        let new = adam_step(&mut state, &theta, &Array1::zeros(3), 0.1);
        assert_eq!(theta, new);
    }

    #[test]
    fn adam_constant_gradient_moves_against_sign() {
        let mut state = AdamState::new(2, 0.9, 0.999, 1e-8);
        let mut theta = Array1::from_vec(vec![0.0, 0.0]);
        let grad = Array1::from_vec(vec![1.0, -2.0]);
        for _ in 0..50 {
            theta = adam_step(&mut state, &theta, &grad, 0.01);
        }
        assert!(theta[0] < 0.0 && theta[1] > 0.0);
    }

    fn quick_linear_config() -> CentralPathConfig {
        CentralPathConfig {
            lr: 0.03,
            max_iters_per_stage: 2000,
            lambda1: 0.0,
            pretrain: false,
            ..CentralPathConfig::default_dce()
        }
    }

    #[test]
    fn recovers_single_edge_linear_sem() {
        let x = two_node_linear_data(2.0, 1000, 42);
        let mut model = LinearSemModel::zeros(2);
        let result = fit_dagma_dce(&x, &mut model, &quick_linear_config()).unwrap();
        let a01 = result.adjacency.values[(0, 1)];
        let a10 = result.adjacency.values[(1, 0)];
        assert!((a01 - 2.0).abs() < 0.1, "A_01 = {a01}");
        assert!(a10 < 0.1, "A_10 = {a10}");
    }

    #[test]
    fn single_variable_reduces_to_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((50, 1), |_| StandardNormal.sample(&mut rng));
        let mut model = LinearSemModel::zeros(1);
        let result = fit_dagma_dce(&x, &mut model, &quick_linear_config()).unwrap();
        assert_eq!(result.adjacency.d(), 1);
        assert!(result.adjacency.values[(0, 0)].abs() < 1e-12);
        let last = result.trace.last().unwrap();
        assert!(last.score.h_value.abs() < 1e-12);
    }

    #[test]
    fn h_decreases_from_init_on_sem_data() {
        for seed in [1_u64, 2, 3] {
            let x = two_node_linear_data(1.5, 400, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model =
                MlpSemModel::random_init(2, vec![6], Activation::Sigmoid, true, &mut rng);
            let jac0 = model.jacobian_batch(&x).unwrap();
            let a0 = objective::dce_adjacency(&jac0);
            let h0 = acyclicity::h_dagma(&a0, 0.7).expect_feasible();
            let config = CentralPathConfig {
                lr: 5e-3,
                max_iters_per_stage: 300,
                pretrain: false,
                ..CentralPathConfig::default_dce()
            };
            let result = fit_dagma_dce(&x, &mut model, &config).unwrap();
            let h_final = result.trace.last().unwrap().score.h_value;
            assert!(
                h_final < h0 || h0 < 1e-9,
                "seed {seed}: h went from {h0} to {h_final}"
            );
        }
    }

    #[test]
    fn deterministic_given_seeded_init() {
        let x = two_node_linear_data(1.2, 200, 9);
        let config = CentralPathConfig {
            lr: 1e-3,
            max_iters_per_stage: 50,
            pretrain: false,
            ..CentralPathConfig::default_dce()
        };
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model =
                MlpSemModel::random_init(2, vec![5], Activation::Sigmoid, true, &mut rng);
            let r = fit_dagma_dce(&x, &mut model, &config).unwrap();
            (r.adjacency, r.trace)
        };
        let (a1, t1) = run(7);
        let (a2, t2) = run(7);
        assert_eq!(a1.values, a2.values, "adjacency must be bit-identical");
        assert_eq!(t1.len(), t2.len());
        for (r1, r2) in t1.iter().zip(t2.iter()) {
            assert_eq!(r1.score.total.to_bits(), r2.score.total.to_bits());
        }
    }

    #[test]
    fn zero_iteration_baseline_returns_initialization_adjacency() {
        let x = two_node_linear_data(1.0, 100, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = MlpSemModel::random_init(2, vec![4], Activation::Sigmoid, true, &mut rng);
        let before = model.first_layer_norms();
        let config = CentralPathConfig {
            max_iters_per_stage: 0,
            ..CentralPathConfig::default_baseline()
        };
        let result = fit_dagma_baseline(&x, &mut model, &config).unwrap();
        assert_eq!(result.adjacency.values, before.values);
        assert_eq!(result.accepted_iters, 0);
    }

    #[test]
    fn pretrain_zero_iters_is_identity() {
        let x = two_node_linear_data(1.0, 100, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut model = MlpSemModel::random_init(2, vec![4], Activation::Sigmoid, true, &mut rng);
        let theta0 = model.params();
        let config = CentralPathConfig {
            pretrain_iters: 0,
            ..CentralPathConfig::default_dce()
        };
        let accepted = pretrain_dagma(&x, &mut model, &config).unwrap();
        assert_eq!(accepted, 0);
        assert_eq!(model.params(), theta0);
    }

    #[test]
    fn pretrain_output_is_feasible() {
        let x = two_node_linear_data(1.5, 300, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut model = MlpSemModel::random_init(2, vec![5], Activation::Sigmoid, true, &mut rng);
        let config = CentralPathConfig {
            pretrain_iters: 200,
            lr: 5e-3,
            ..CentralPathConfig::default_dce()
        };
        pretrain_dagma(&x, &mut model, &config).unwrap();
        let report = acyclicity::check_feasible(&model.first_layer_norms(), config.s_schedule[0]);
        assert!(report.feasible, "{report:?}");
    }

    #[test]
    fn baseline_rejects_non_mlp() {
        let x = two_node_linear_data(1.0, 50, 8);
        let mut model = LinearSemModel::zeros(2);
        assert!(matches!(
            fit_dagma_baseline(&x, &mut model, &CentralPathConfig::default_baseline()),
            Err(SolverError::Model(ModelError::UnsupportedModel { .. }))
        ));
    }

    #[test]
    fn infeasible_initialization_is_setup_error() {
        let x = two_node_linear_data(1.0, 50, 10);
        let mut model = LinearSemModel::zeros(2);
        model.set_params(&[0.0, 1.5, 1.5, 0.0]);
        match fit_dagma_dce(&x, &mut model, &quick_linear_config()) {
            Err(SolverError::InfeasibleInit(_)) => {}
            other => panic!("expected setup error, got {other:?}"),
        }
    }

    #[test]
    fn linear_dce_objective_equals_linear_baseline_analog() {
        // With a linear model the DCE score and the linear-DAGMA score
        // coincide at any θ: same MSE, L1(J) = Σ|β|, same h on |β|.
        let x = two_node_linear_data(1.3, 150, 14);
        let mut model = LinearSemModel::zeros(2);
        model.set_params(&[0.0, 0.6, -0.2, 0.0]);
        let lambda1 = 0.035;
        let (score, _) = objective::evaluate_objective(&model, &x, lambda1, 0.5, 1.0).unwrap();

        let beta = model.coefficients();
        let n = x.nrows() as f64;
        let residual = x.dot(beta) - &x;
        let mse = residual.iter().map(|r| r * r).sum::<f64>() / (2.0 * n);
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let h = acyclicity::h_dagma(&WeightedAdjacency::new(beta.mapv(f64::abs)), 1.0)
            .expect_feasible();
        let manual_total = 0.5 * (mse + lambda1 * l1) + h;
        assert!((score.total - manual_total).abs() < 1e-12);
        assert!((score.l1_dce - l1).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let x = two_node_linear_data(1.0, 20, 15);
        let mut model = LinearSemModel::zeros(2);
        let config = CentralPathConfig {
            s_schedule: vec![1.0],
            ..CentralPathConfig::default_dce()
        };
        assert!(matches!(
            fit_dagma_dce(&x, &mut model, &config),
            Err(SolverError::Config(_))
        ));
    }

    #[test]
    fn trace_records_carry_stage_and_lr() {
        let x = two_node_linear_data(2.0, 200, 16);
        let mut model = LinearSemModel::zeros(2);
        let config = CentralPathConfig {
            lr: 0.02,
            max_iters_per_stage: 30,
            lambda1: 0.0,
            pretrain: false,
            ..CentralPathConfig::default_dce()
        };
        let result = fit_dagma_dce(&x, &mut model, &config).unwrap();
        assert!(!result.trace.is_empty());
        assert!(result.trace.iter().all(|r| r.lr > 0.0));
        let stages: std::collections::BTreeSet<_> =
            result.trace.iter().map(|r| r.stage).collect();
        assert_eq!(stages, (0..4).collect());
        // Totals must satisfy the breakdown identity.
        for r in &result.trace {
            let rebuilt = r.score.mu * (r.score.mse + config.lambda1 * r.score.l1_dce)
                + r.score.h_value;
            assert!((rebuilt - r.score.total).abs() < 1e-12);
        }
    }
}
