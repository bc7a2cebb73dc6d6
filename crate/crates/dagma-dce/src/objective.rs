//! The DCE score: penalized MSE plus the log-det constraint evaluated on
//! the root-mean-square Jacobian adjacency.
//!
//! The adjacency is `A_ij = sqrt(1/N Σ_n J[n][j][i]²)` and the sparsity
//! penalty is the mean absolute Jacobian summed over all pairs. Both are
//! plain reductions over the Jacobian batch, so their θ-gradients flow
//! through [`DifferentiableSemModel::vjp_jacobian_params`] with the
//! cotangents assembled here.

use crate::acyclicity::{self, HValue, InfeasibleReason};
use crate::graphs::WeightedAdjacency;
use crate::models::{DifferentiableSemModel, JacobianBatch, ModelError};
use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Guard at the RMS kink: an adjacency entry at or below this is treated
/// as an absent edge and receives a zero subgradient.
pub const EPS_ADJACENCY: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("adjacency left the feasible region: {0:?}")]
    Infeasible(InfeasibleReason),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One evaluation of the penalized score, split into its terms.
/// `total = mu * (mse + lambda1 * l1_dce) + h_value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub mse: f64,
    pub l1_dce: f64,
    pub h_value: f64,
    pub mu: f64,
    pub total: f64,
}

/// Root-mean-square Jacobian adjacency: `A_ij = sqrt(1/N Σ_n J[n][j][i]²)`.
pub fn dce_adjacency(jac: &JacobianBatch) -> WeightedAdjacency {
    let (n, d, _) = jac.values.dim();
    assert!(n >= 1);
    let n_f = n as f64;
    let mut a: Array2<f64> = Array2::zeros((d, d));
    for s in 0..n {
        for j in 0..d {
            for i in 0..d {
                let v = jac.values[(s, j, i)];
                a[(i, j)] += v * v;
            }
        }
    }
    a.mapv_inplace(|v| (v / n_f).sqrt());
    WeightedAdjacency::new(a)
}

/// Mean absolute Jacobian summed over all ordered pairs (diagonal
/// included; the constraint is what suppresses it).
pub fn dce_l1(jac: &JacobianBatch) -> f64 {
    let n = jac.n_samples() as f64;
    jac.values.iter().map(|v| v.abs()).sum::<f64>() / n
}

/// Cotangent pulling a gradient `dA` on the adjacency back onto the
/// Jacobian batch: `G[n][j][i] = dA_ij · J[n][j][i] / (N · A_ij)`, with a
/// zero subgradient where `A_ij` is below [`EPS_ADJACENCY`].
pub fn adjacency_cotangent(
    a: &WeightedAdjacency,
    jac: &JacobianBatch,
    d_adj: &Array2<f64>,
) -> Array3<f64> {
    let (n, d, _) = jac.values.dim();
    assert_eq!(a.d(), d);
    assert_eq!(d_adj.dim(), (d, d));
    let n_f = n as f64;
    let mut g = Array3::zeros((n, d, d));
    for j in 0..d {
        for i in 0..d {
            let a_ij = a.values[(i, j)];
            if a_ij <= EPS_ADJACENCY {
                continue;
            }
            let scale = d_adj[(i, j)] / (n_f * a_ij);
            for s in 0..n {
                g[(s, j, i)] = scale * jac.values[(s, j, i)];
            }
        }
    }
    g
}

/// Cotangent of [`dce_l1`]: `sign(J)/N`, with `sign(0) = 0`.
pub fn l1_cotangent(jac: &JacobianBatch) -> Array3<f64> {
    let n = jac.n_samples() as f64;
    jac.values.mapv(|v| {
        if v > 0.0 {
            1.0 / n
        } else if v < 0.0 {
            -1.0 / n
        } else {
            0.0
        }
    })
}

/// Evaluates `mu * (MSE + lambda1 * L1_DCE) + h(A(θ), s)` and its exact
/// θ-gradient. Returns the infeasibility as a typed error so the solver
/// can back off.
pub fn evaluate_objective(
    model: &dyn DifferentiableSemModel,
    x: &Array2<f64>,
    lambda1: f64,
    mu: f64,
    s: f64,
) -> Result<(ScoreBreakdown, Array1<f64>), ObjectiveError> {
    let (mse, grad_mse) = model.grad_params_mse(x);
    let jac = model.jacobian_batch(x)?;
    let adjacency = dce_adjacency(&jac);

    let h_value = match acyclicity::h_dagma(&adjacency, s) {
        HValue::Feasible(v) => v,
        HValue::Infeasible(reason) => return Err(ObjectiveError::Infeasible(reason)),
    };
    let d_adj =
        acyclicity::grad_h_dagma(&adjacency, s).map_err(ObjectiveError::Infeasible)?;

    let l1 = dce_l1(&jac);

    // Single VJP over the combined cotangent; the map is linear in G.
    let mut cot = adjacency_cotangent(&adjacency, &jac, &d_adj);
    if lambda1 != 0.0 {
        let cot_l1 = l1_cotangent(&jac);
        cot.zip_mut_with(&cot_l1, |g, &l| *g += mu * lambda1 * l);
    }
    let grad_jac_terms = model.vjp_jacobian_params(x, &cot);

    let total = mu * (mse + lambda1 * l1) + h_value;
    let grad = &grad_mse * mu + grad_jac_terms;

    Ok((
        ScoreBreakdown { mse, l1_dce: l1, h_value, mu, total },
        grad,
    ))
}

/// DCE adjacency and score at θ without gradients (for reporting).
pub fn score_only(
    model: &dyn DifferentiableSemModel,
    x: &Array2<f64>,
    lambda1: f64,
    mu: f64,
    s: f64,
) -> Result<(ScoreBreakdown, WeightedAdjacency), ObjectiveError> {
    let out = model.forward(x)?;
    let n = x.nrows() as f64;
    let mse = (&out - x).iter().map(|r| r * r).sum::<f64>() / (2.0 * n);
    let jac = model.jacobian_batch(x)?;
    let adjacency = dce_adjacency(&jac);
    let h_value = match acyclicity::h_dagma(&adjacency, s) {
        HValue::Feasible(v) => v,
        HValue::Infeasible(reason) => return Err(ObjectiveError::Infeasible(reason)),
    };
    let l1 = dce_l1(&jac);
    let total = mu * (mse + lambda1 * l1) + h_value;
    Ok((
        ScoreBreakdown { mse, l1_dce: l1, h_value, mu, total },
        adjacency,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{fd_gradient, max_rel_err};
    use crate::models::{Activation, LinearSemModel, MlpSemModel};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_jac(n: usize, d: usize, c: f64) -> JacobianBatch {
        JacobianBatch::new(Array3::from_elem((n, d, d), c))
    }

    #[test]
    fn adjacency_of_zero_jacobian_is_zero() {
        let a = dce_adjacency(&JacobianBatch::zeros(5, 3));
        assert!(a.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjacency_of_constant_jacobian_is_magnitude() {
        let a = dce_adjacency(&constant_jac(7, 2, -1.5));
        assert!(a.values.iter().all(|&v| (v - 1.5).abs() < 1e-14));
    }

    #[test]
    fn adjacency_two_sample_rms() {
        // Entries 3 and 4 across two samples: sqrt((9+16)/2) = sqrt(12.5).
        let mut j = Array3::zeros((2, 1, 1));
        j[(0, 0, 0)] = 3.0;
        j[(1, 0, 0)] = 4.0;
        let a = dce_adjacency(&JacobianBatch::new(j));
        assert!((a.values[(0, 0)] - 12.5_f64.sqrt()).abs() < 1e-14);
        assert!((a.values[(0, 0)] - 3.5355).abs() < 1e-4);
    }

    #[test]
    fn adjacency_invariant_under_sample_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 6;
        let d = 3;
        let j = Array3::from_shape_fn((n, d, d), |_| rng.gen_range(-2.0..2.0));
        let a1 = dce_adjacency(&JacobianBatch::new(j.clone()));
        let mut permuted = Array3::zeros((n, d, d));
        let order = [4, 0, 5, 2, 1, 3];
        for (dst, &src) in order.iter().enumerate() {
            for jj in 0..d {
                for ii in 0..d {
                    permuted[(dst, jj, ii)] = j[(src, jj, ii)];
                }
            }
        }
        let a2 = dce_adjacency(&JacobianBatch::new(permuted));
        for (x, y) in a1.values.iter().zip(a2.values.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn l1_values() {
        assert_eq!(dce_l1(&JacobianBatch::zeros(4, 2)), 0.0);

        let mut j = Array3::zeros((3, 2, 2));
        for s in 0..3 {
            j[(s, 0, 1)] = 2.0;
        }
        assert!((dce_l1(&JacobianBatch::new(j)) - 2.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let j: Array3<f64> = Array3::from_shape_fn((5, 3, 3), |_| rng.gen_range(-1.0..1.0));
        let brute: f64 = j.iter().map(|v| v.abs()).sum::<f64>() / 5.0;
        assert!((dce_l1(&JacobianBatch::new(j)) - brute).abs() < 1e-12);
    }

    #[test]
    fn homogeneity_in_jacobian_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let j = Array3::from_shape_fn((4, 3, 3), |_| rng.gen_range(-1.0..1.0));
        let t = 3.7;
        let jb = JacobianBatch::new(j.clone());
        let jb_scaled = JacobianBatch::new(j.mapv(|v| t * v));
        let a = dce_adjacency(&jb);
        let a_scaled = dce_adjacency(&jb_scaled);
        for (x, y) in a.values.iter().zip(a_scaled.values.iter()) {
            assert!((t * x - y).abs() < 1e-12);
        }
        assert!((t * dce_l1(&jb) - dce_l1(&jb_scaled)).abs() < 1e-12);
    }

    #[test]
    fn cotangent_trivials() {
        let jb = constant_jac(4, 2, 2.0);
        let a = dce_adjacency(&jb);
        let zero_up = Array2::zeros((2, 2));
        let g = adjacency_cotangent(&a, &jb, &zero_up);
        assert!(g.iter().all(|&v| v == 0.0));

        // Constant Jacobian c>0, dA = 1: G = c/(N·|c|) = 1/N.
        let ones = Array2::from_elem((2, 2), 1.0);
        let g = adjacency_cotangent(&a, &jb, &ones);
        assert!(g.iter().all(|&v| (v - 0.25 * 1.0).abs() < 1e-14));

        let zero_jac = JacobianBatch::zeros(4, 2);
        assert!(l1_cotangent(&zero_jac).iter().all(|&v| v == 0.0));
        let g = l1_cotangent(&constant_jac(4, 2, 5.0));
        assert!(g.iter().all(|&v| (v - 0.25).abs() < 1e-14));
    }

    #[test]
    fn zero_weight_mlp_objective_is_mu_times_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 3;
        let model = MlpSemModel::zeros(d, vec![4], Activation::Sigmoid, true);
        let x = ndarray::Array2::from_shape_fn((10, d), |_| rng.gen_range(-1.0..1.0));
        let mu = 0.7;
        let (score, _) = evaluate_objective(&model, &x, 0.05, mu, 1.0).unwrap();
        assert_eq!(score.l1_dce, 0.0);
        assert_eq!(score.h_value, 0.0);
        let expected_mse = x.iter().map(|v| v * v).sum::<f64>() / (2.0 * 10.0);
        assert!((score.mse - expected_mse).abs() < 1e-12);
        assert!((score.total - mu * expected_mse).abs() < 1e-12);
    }

    #[test]
    fn linear_model_objective_is_linear_dagma() {
        // With a linear model and λ1 = 0, the score must coincide with
        // linear DAGMA's: ||X - Xβ||²/(2N) + h(|β|) where |β|∘|β| = β∘β.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = 3;
        let n = 20;
        let x = ndarray::Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let mut model = LinearSemModel::zeros(d);
        let theta: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-0.4..0.4)).collect();
        model.set_params(&theta);

        let mu = 0.3;
        let s = 1.0;
        let (score, _) = evaluate_objective(&model, &x, 0.0, mu, s).unwrap();

        let beta = model.coefficients();
        let residual = x.dot(beta) - &x;
        let mse = residual.iter().map(|r| r * r).sum::<f64>() / (2.0 * n as f64);
        let abs_beta = WeightedAdjacency::new(beta.mapv(f64::abs));
        let h = crate::acyclicity::h_dagma(&abs_beta, s).expect_feasible();
        assert!((score.mse - mse).abs() < 1e-12);
        assert!((score.total - (mu * mse + h)).abs() < 1e-12);
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        // The module's flagship property, at reduced scale; the
        // acceptance suite runs the full 50-instance version.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..5 {
            let d = 3;
            let n = 12;
            let x = ndarray::Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
            let mut model = MlpSemModel::zeros(d, vec![4], Activation::Sigmoid, true);
            let theta: Vec<f64> =
                (0..model.num_params()).map(|_| rng.gen_range(-0.7..0.7)).collect();
            model.set_params(&theta);
            let (lambda1, mu, s) = (0.035, 0.6, 1.0);

            let (_, grad) = evaluate_objective(&model, &x, lambda1, mu, s).unwrap();
            let fd = fd_gradient(&model.params(), 1e-5, |t| {
                let mut probe = MlpSemModel::zeros(d, vec![4], Activation::Sigmoid, true);
                probe.set_params(t);
                evaluate_objective(&probe, &x, lambda1, mu, s).unwrap().0.total
            });
            let err = max_rel_err(&grad, &fd);
            assert!(err < 1e-4, "trial {trial}: max rel err {err}");
        }
    }

    #[test]
    fn infeasible_adjacency_is_typed_error() {
        // A linear model with a strong 2-cycle at s=1 must report
        // infeasibility, not panic.
        let mut model = LinearSemModel::zeros(2);
        model.set_params(&[0.0, 1.2, 1.2, 0.0]);
        let x = ndarray::Array2::from_elem((5, 2), 0.5);
        match evaluate_objective(&model, &x, 0.0, 1.0, 1.0) {
            Err(ObjectiveError::Infeasible(_)) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }
}
