//! Executable witnesses that first-layer weight norms are not
//! interpretable as causal strengths.
//!
//! Two constructions, both checked numerically over standard-normal
//! inputs (the RMS-Jacobian adjacency is the operational surrogate for
//! the function-space derivative norm):
//!
//! 1. A sigmoid MLP whose first-layer column for a chosen input has L2
//!    norm below any ε while its RMS derivative with respect to that
//!    input exceeds any δ — tiny first-layer mass amplified through the
//!    second layer.
//! 2. ReLU rescaling invariance: scaling the first layer by a positive
//!    diagonal and the second layer by its inverse leaves the function
//!    (hence the Jacobian) pointwise identical while setting the
//!    first-layer norm to any prescribed value.

use crate::models::{Activation, DifferentiableSemModel, MlpSemModel, ModelError, NodeMlp};
use crate::objective::dce_adjacency;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Sample count and seed for the empirical RMS derivative, fixed so the
/// witnesses are reproducible.
pub const WITNESS_SAMPLES: usize = 1000;
pub const WITNESS_SEED: u64 = 0x1e77a5;

/// Numbers backing the small-first-layer witness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Witness {
    pub eps: f64,
    pub delta: f64,
    pub first_layer_norm: f64,
    pub dce_entry: f64,
}

/// Standard-normal evaluation inputs shared by the demonstrations.
pub fn witness_inputs(d: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(WITNESS_SEED);
    Array2::from_shape_fn((WITNESS_SAMPLES, d), |_| StandardNormal.sample(&mut rng))
}

/// Builds a sigmoid MLP (nontrivial only at node `target`) whose
/// first-layer column for `input` has norm `eps/2 < eps` while the
/// empirical RMS derivative with respect to `input` exceeds `delta`.
///
/// First-layer mass `eps/2` is spread evenly over the hidden units and
/// the second layer is scaled to push the derivative past `delta`: with
/// per-unit weight `w = (eps/2)/sqrt(H)` and second-layer entries `c`,
/// the derivative at small `w` is about `c · H · w / 4`, so
/// `c = 6 delta / (H w)` clears `delta` with a 1.5× margin.
pub fn construct_lemma1_mlp(
    eps: f64,
    delta: f64,
    input: usize,
    d: usize,
    hidden: usize,
) -> MlpSemModel {
    assert!(eps > 0.0 && delta >= 0.0);
    assert!(input < d && hidden >= 1);
    let target = if input == d - 1 { 0 } else { d - 1 };

    let w = (eps / 2.0) / (hidden as f64).sqrt();
    let c = 6.0 * delta.max(1e-6) / (hidden as f64 * w);

    let mut model = MlpSemModel::zeros(d, vec![hidden], Activation::Sigmoid, true);
    let node = model.node_mut(target);
    for h in 0..hidden {
        node.ws[0][(h, input)] = w;
        node.ws[1][(0, h)] = c;
    }
    model
}

/// Evaluates the first-layer norm and the empirical RMS-Jacobian entry
/// for the designated input/target pair of a lemma-1 construction.
pub fn lemma1_witness(eps: f64, delta: f64, input: usize, d: usize, hidden: usize) -> Lemma1Witness {
    let model = construct_lemma1_mlp(eps, delta, input, d, hidden);
    let target = if input == d - 1 { 0 } else { d - 1 };
    let x = witness_inputs(d);
    let jac = model.jacobian_batch(&x).expect("witness inputs are finite");
    let adjacency = dce_adjacency(&jac);
    Lemma1Witness {
        eps,
        delta,
        first_layer_norm: model.first_layer_norms().values[(input, target)],
        dce_entry: adjacency.values[(input, target)],
    }
}

/// Rescales a two-layer ReLU regressor so its first-layer norm for
/// `input` equals `target_norm`, leaving the function pointwise
/// unchanged: `relu(a z) = a relu(z)` for `a > 0`, so scaling the first
/// layer (weights and biases) by `a` and the second layer by `1/a`
/// cancels exactly.
pub fn rescale_relu_mlp(
    model: &MlpSemModel,
    node: usize,
    input: usize,
    target_norm: f64,
) -> Result<MlpSemModel, ModelError> {
    assert!(target_norm > 0.0, "target norm must be positive");
    if model.activation() != Activation::Relu {
        return Err(ModelError::UnsupportedModel { got: "non-relu mlp" });
    }
    if model.hidden().len() != 1 {
        return Err(ModelError::UnsupportedModel { got: "deep mlp" });
    }
    let current = model.first_layer_norms().values[(input, node)];
    if current <= 0.0 {
        return Err(ModelError::CheckpointMismatch(format!(
            "first-layer norm for input {input} of node {node} is zero; \
             no positive rescaling can reach {target_norm}"
        )));
    }
    let scale = target_norm / current;
    let mut rescaled = model.clone();
    let n = rescaled.node_mut(node);
    n.ws[0].mapv_inplace(|v| v * scale);
    n.bs[0].mapv_inplace(|v| v * scale);
    n.ws[1].mapv_inplace(|v| v / scale);
    Ok(rescaled)
}

/// A small random two-layer ReLU model for the rescaling demonstration.
pub fn random_relu_mlp(d: usize, hidden: usize, seed: u64) -> MlpSemModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(d);
    for _ in 0..d {
        let mut node = NodeMlp {
            ws: vec![Array2::zeros((hidden, d)), Array2::zeros((1, hidden))],
            bs: vec![ndarray::Array1::zeros(hidden), ndarray::Array1::zeros(1)],
        };
        for l in 0..2 {
            for v in node.ws[l].iter_mut() {
                *v = rand::Rng::gen_range(&mut rng, -1.0..1.0);
            }
        }
        for v in node.bs[0].iter_mut() {
            *v = rand::Rng::gen_range(&mut rng, -0.5..0.5);
        }
        nodes.push(node);
    }
    MlpSemModel::from_nodes(d, vec![hidden], Activation::Relu, true, nodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lemma1_headline_witness() {
        // eps = 1e-3, delta = 10: norm under eps, derivative over delta.
        let w = lemma1_witness(1e-3, 10.0, 0, 3, 10);
        assert!(w.first_layer_norm < 1e-3, "norm {}", w.first_layer_norm);
        assert!(w.dce_entry > 10.0, "dce {}", w.dce_entry);
    }

    #[test]
    fn lemma1_grid() {
        for eps in [1e-1, 1e-2, 1e-3] {
            for delta in [1.0, 10.0, 100.0] {
                let w = lemma1_witness(eps, delta, 1, 4, 10);
                assert!(w.first_layer_norm < eps, "eps {eps} delta {delta}: {w:?}");
                assert!(w.dce_entry > delta, "eps {eps} delta {delta}: {w:?}");
            }
        }
    }

    #[test]
    fn lemma1_trivial_boundary() {
        // delta = 0 is satisfied by any nonzero construction.
        let w = lemma1_witness(1.0, 0.0, 0, 2, 4);
        assert!(w.first_layer_norm < 1.0);
        assert!(w.dce_entry > 0.0);
    }

    #[test]
    fn lemma1_dce_entry_scales_linearly_in_second_layer() {
        let (eps, delta, input, d, hidden) = (1e-2, 5.0, 0, 3, 8);
        let base = construct_lemma1_mlp(eps, delta, input, d, hidden);
        let mut doubled = base.clone();
        doubled.node_mut(d - 1).ws[1].mapv_inplace(|v| v * 2.0);

        let x = witness_inputs(d);
        let entry = |m: &MlpSemModel| {
            let jac = m.jacobian_batch(&x).unwrap();
            dce_adjacency(&jac).values[(input, d - 1)]
        };
        let ratio = entry(&doubled) / entry(&base);
        assert!((ratio - 2.0).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn relu_rescale_preserves_function_and_sets_norm() {
        let model = random_relu_mlp(3, 6, 7);
        let x = witness_inputs(3);
        let before = model.forward(&x).unwrap();
        for s in [1e-3, 1.0, 1e3] {
            let rescaled = rescale_relu_mlp(&model, 1, 0, s).unwrap();
            let norm = rescaled.first_layer_norms().values[(0, 1)];
            assert!((norm - s).abs() <= 1e-12 * s.max(1.0), "norm {norm} target {s}");
            let after = rescaled.forward(&x).unwrap();
            for (a, b) in before.iter().zip(after.iter()) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b} at s={s}");
            }
        }
    }

    #[test]
    fn relu_rescale_to_current_norm_is_identity() {
        let model = random_relu_mlp(2, 4, 9);
        let current = model.first_layer_norms().values[(1, 0)];
        let rescaled = rescale_relu_mlp(&model, 0, 1, current).unwrap();
        for (a, b) in model.node(0).ws[0].iter().zip(rescaled.node(0).ws[0].iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_rescale_composition_collapses() {
        let model = random_relu_mlp(2, 4, 11);
        let once = rescale_relu_mlp(&model, 0, 1, 5.0).unwrap();
        let twice = rescale_relu_mlp(&once, 0, 1, 0.25).unwrap();
        let direct = rescale_relu_mlp(&model, 0, 1, 0.25).unwrap();
        for (a, b) in twice.node(0).ws[0].iter().zip(direct.node(0).ws[0].iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_rescale_rejects_zero_norm_and_sigmoid() {
        let zero = MlpSemModel::zeros(2, vec![3], Activation::Relu, true);
        assert!(rescale_relu_mlp(&zero, 0, 1, 2.0).is_err());

        let sigmoid = MlpSemModel::zeros(2, vec![3], Activation::Sigmoid, true);
        assert!(matches!(
            rescale_relu_mlp(&sigmoid, 0, 1, 2.0),
            Err(ModelError::UnsupportedModel { .. })
        ));
    }

    #[test]
    fn dce_adjacency_invariant_under_rescaling_grid() {
        // The crate's core point: the RMS-Jacobian adjacency does not
        // move while the first-layer norm sweeps six orders of magnitude.
        let model = random_relu_mlp(3, 6, 13);
        let x = witness_inputs(3);
        let reference = dce_adjacency(&model.jacobian_batch(&x).unwrap());
        let mut norms = Vec::new();
        for s in [1e-3, 1.0, 1e3] {
            let rescaled = rescale_relu_mlp(&model, 1, 0, s).unwrap();
            norms.push(rescaled.first_layer_norms().values[(0, 1)]);
            let adj = dce_adjacency(&rescaled.jacobian_batch(&x).unwrap());
            for (a, b) in reference.values.iter().zip(adj.values.iter()) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b} at s={s}");
            }
        }
        assert!(norms[2] / norms[0] > 1e5, "norms {norms:?}");
    }
}
