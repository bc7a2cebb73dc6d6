//! Per-node MLP regressors: `d` parallel networks, each reading the full
//! `d`-dimensional input through one or more hidden layers into a scalar
//! output.
//!
//! Besides the usual forward/backward passes, this file carries the
//! second-order machinery the DCE objective needs: the θ-gradient of a
//! Jacobian contraction `<G, J(θ)>`. Per sample, `<G_n, J_n>` equals the
//! forward-mode directional derivative of the network at `x_n` with
//! tangent `G_n`, so the gradient is obtained by running reverse-mode
//! over that augmented forward pass. Sigmoid activations keep everything
//! twice differentiable; the ReLU variant exists for the rescaling
//! demonstrations and reports a zero second derivative.

use super::{DifferentiableSemModel, JacobianBatch, ModelCheckpoint, ModelError};
use crate::graphs::WeightedAdjacency;
use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
        }
    }

    /// First derivative, computed from the cached activation value.
    fn d1_from_act(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Second derivative from the cached activation value (0 for ReLU).
    fn d2_from_act(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a) * (1.0 - 2.0 * a),
            Activation::Relu => 0.0,
        }
    }
}

/// One regressor's weights: `ws[l]` has shape `(out_l, in_l)` over the
/// layer dims `[d, hidden..., 1]`; `bs[l]` matches `out_l` and stays
/// all-zero when biases are disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMlp {
    pub ws: Vec<Array2<f64>>,
    pub bs: Vec<Array1<f64>>,
}

impl NodeMlp {
    fn zeros(dims: &[usize]) -> Self {
        let ws = dims.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect();
        let bs = dims.windows(2).map(|w| Array1::zeros(w[1])).collect();
        Self { ws, bs }
    }
}

/// `d` full-input MLP regressors with shared architecture.
///
/// θ layout: nodes in order; within a node, layers in order; within a
/// layer, the weight matrix row-major followed by the bias vector when
/// biases are enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSemModel {
    d: usize,
    hidden: Vec<usize>,
    activation: Activation,
    biases: bool,
    nodes: Vec<NodeMlp>,
}

impl MlpSemModel {
    /// Layer dimensions `[d, hidden..., 1]`.
    fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.d);
        dims.extend_from_slice(&self.hidden);
        dims.push(1);
        dims
    }

    pub fn zeros(d: usize, hidden: Vec<usize>, activation: Activation, biases: bool) -> Self {
        assert!(!hidden.is_empty(), "need at least one hidden layer");
        assert!(hidden.iter().all(|&h| h >= 1));
        let mut dims = vec![d];
        dims.extend_from_slice(&hidden);
        dims.push(1);
        let nodes = (0..d).map(|_| NodeMlp::zeros(&dims)).collect();
        Self { d, hidden, activation, biases, nodes }
    }

    /// Random initialization: first layer all-zero so both adjacency
    /// notions start exactly at 0 (strictly inside the feasible region
    /// at any s > 0), deeper layers uniform in ±1/sqrt(fan_in), biases
    /// zero. Gradients still reach the first layer through the random
    /// upper layers.
    pub fn random_init<R: Rng>(
        d: usize,
        hidden: Vec<usize>,
        activation: Activation,
        biases: bool,
        rng: &mut R,
    ) -> Self {
        let mut model = Self::zeros(d, hidden, activation, biases);
        for node in &mut model.nodes {
            for w in node.ws.iter_mut().skip(1) {
                let bound = 1.0 / (w.ncols() as f64).sqrt();
                for v in w.iter_mut() {
                    *v = rng.gen_range(-bound..bound);
                }
            }
        }
        model
    }

    /// Builds a model from explicit per-node weights (used by the lemma
    /// constructions and tests).
    pub fn from_nodes(
        d: usize,
        hidden: Vec<usize>,
        activation: Activation,
        biases: bool,
        nodes: Vec<NodeMlp>,
    ) -> Self {
        assert_eq!(nodes.len(), d);
        let probe = Self::zeros(d, hidden.clone(), activation, biases);
        let dims = probe.dims();
        for node in &nodes {
            assert_eq!(node.ws.len(), dims.len() - 1);
            for (l, w) in node.ws.iter().enumerate() {
                assert_eq!(w.dim(), (dims[l + 1], dims[l]), "layer {l} shape");
                assert_eq!(node.bs[l].len(), dims[l + 1]);
            }
        }
        Self { d, hidden, activation, biases, nodes }
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn has_biases(&self) -> bool {
        self.biases
    }

    pub fn node(&self, j: usize) -> &NodeMlp {
        &self.nodes[j]
    }

    pub fn node_mut(&mut self, j: usize) -> &mut NodeMlp {
        &mut self.nodes[j]
    }

    /// Entry `(i, j)`: L2 norm of the first-layer weight column of
    /// regressor `j` multiplying input `i`.
    pub fn first_layer_norms(&self) -> WeightedAdjacency {
        let mut a = Array2::zeros((self.d, self.d));
        for (j, node) in self.nodes.iter().enumerate() {
            let w1 = &node.ws[0];
            for i in 0..self.d {
                let norm_sq: f64 = w1.column(i).iter().map(|v| v * v).sum();
                a[(i, j)] = norm_sq.sqrt();
            }
        }
        WeightedAdjacency::new(a)
    }

    /// Sum of absolute first-layer weights across all regressors.
    pub fn l1_first_layer(&self) -> f64 {
        self.nodes.iter().map(|n| n.ws[0].iter().map(|v| v.abs()).sum::<f64>()).sum()
    }

    /// Subgradient of [`Self::l1_first_layer`] over θ (sign of each
    /// first-layer weight, zero elsewhere).
    pub fn l1_first_layer_subgradient(&self) -> Array1<f64> {
        let mut grad = Array1::zeros(self.num_params());
        let mut offset = 0;
        for node in &self.nodes {
            for (l, w) in node.ws.iter().enumerate() {
                if l == 0 {
                    for (k, v) in w.iter().enumerate() {
                        grad[offset + k] = v.signum() * f64::from(*v != 0.0);
                    }
                }
                offset += w.len();
                if self.biases {
                    offset += node.bs[l].len();
                }
            }
        }
        grad
    }

    /// Gradient over θ of `Σ_ij dA_ij * first_layer_norms()_ij`, the
    /// chain-rule hook the baseline objective needs. Columns with zero
    /// norm get a zero subgradient.
    pub fn first_layer_norms_vjp(&self, d_adj: &Array2<f64>) -> Array1<f64> {
        let norms = self.first_layer_norms();
        let mut grad = Array1::zeros(self.num_params());
        let mut offset = 0;
        for (j, node) in self.nodes.iter().enumerate() {
            for (l, w) in node.ws.iter().enumerate() {
                if l == 0 {
                    let (rows, cols) = w.dim();
                    for r in 0..rows {
                        for i in 0..cols {
                            let a = norms.values[(i, j)];
                            if a > 1e-12 {
                                grad[offset + r * cols + i] = d_adj[(i, j)] * w[(r, i)] / a;
                            }
                        }
                    }
                }
                offset += w.len();
                if self.biases {
                    offset += node.bs[l].len();
                }
            }
        }
        grad
    }

    /// Hidden activations per layer for one node (`acts[l]` is N×h_{l+1}),
    /// plus the scalar output column.
    fn node_forward(&self, node: &NodeMlp, x: &Array2<f64>) -> (Vec<Array2<f64>>, Array1<f64>) {
        let depth = self.hidden.len();
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(depth);
        let mut prev: ArrayView2<f64> = x.view();
        for l in 0..depth {
            let mut z = prev.dot(&node.ws[l].t());
            if self.biases {
                z += &node.bs[l];
            }
            let a = z.mapv(|v| self.activation.apply(v));
            acts.push(a);
            prev = acts[l].view();
        }
        let w_out = node.ws[depth].row(0);
        let mut out = acts[depth - 1].dot(&w_out);
        if self.biases {
            out += node.bs[depth][0];
        }
        (acts, out)
    }

    fn params_per_node(&self) -> usize {
        let dims = self.dims();
        dims.windows(2)
            .map(|w| w[1] * w[0] + if self.biases { w[1] } else { 0 })
            .sum()
    }
}

impl DifferentiableSemModel for MlpSemModel {
    fn dim(&self) -> usize {
        self.d
    }

    fn num_params(&self) -> usize {
        self.d * self.params_per_node()
    }

    fn params(&self) -> Array1<f64> {
        let mut theta = Vec::with_capacity(self.num_params());
        for node in &self.nodes {
            for (l, w) in node.ws.iter().enumerate() {
                theta.extend(w.iter().copied());
                if self.biases {
                    theta.extend(node.bs[l].iter().copied());
                }
            }
        }
        Array1::from_vec(theta)
    }

    fn set_params(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.num_params(), "θ length mismatch");
        let biases = self.biases;
        let mut k = 0;
        for node in &mut self.nodes {
            for l in 0..node.ws.len() {
                for v in node.ws[l].iter_mut() {
                    *v = theta[k];
                    k += 1;
                }
                if biases {
                    for v in node.bs[l].iter_mut() {
                        *v = theta[k];
                        k += 1;
                    }
                }
            }
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        if x.ncols() != self.d {
            return Err(ModelError::DimMismatch { expected: self.d, got: x.ncols() });
        }
        let n = x.nrows();
        let cols: Vec<Array1<f64>> = self
            .nodes
            .par_iter()
            .map(|node| self.node_forward(node, x).1)
            .collect();
        let mut out = Array2::zeros((n, self.d));
        for (j, col) in cols.iter().enumerate() {
            for s in 0..n {
                let v = col[s];
                if !v.is_finite() {
                    return Err(ModelError::NonFiniteOutput { node: j, sample: s });
                }
                out[(s, j)] = v;
            }
        }
        Ok(out)
    }

    fn jacobian_batch(&self, x: &Array2<f64>) -> Result<JacobianBatch, ModelError> {
        if x.ncols() != self.d {
            return Err(ModelError::DimMismatch { expected: self.d, got: x.ncols() });
        }
        let n = x.nrows();
        let depth = self.hidden.len();
        let act = self.activation;
        let width = *self.dims().iter().max().unwrap();

        // Per node: one reverse vector pass per sample,
        // J[n, j, :] = w_out · Π_l diag(σ'(z_l)) W_l.
        let per_node: Vec<Result<Array2<f64>, ModelError>> = self
            .nodes
            .par_iter()
            .enumerate()
            .map(|(j, node)| {
                let (acts, _) = self.node_forward(node, x);
                let mut rows = Array2::zeros((n, self.d));
                let mut cur = vec![0.0; width];
                let mut next = vec![0.0; width];
                for s in 0..n {
                    let w_out = node.ws[depth].row(0);
                    let h_top = w_out.len();
                    for (k, v) in w_out.iter().enumerate() {
                        cur[k] = *v;
                    }
                    debug_assert!(h_top <= cur.len());
                    for l in (0..depth).rev() {
                        let a_l = acts[l].row(s);
                        let w_l = &node.ws[l];
                        let (h_l, in_l) = w_l.dim();
                        for h in 0..h_l {
                            cur[h] *= act.d1_from_act(a_l[h]);
                        }
                        next[..in_l].fill(0.0);
                        for h in 0..h_l {
                            let r = cur[h];
                            if r != 0.0 {
                                let w_row = w_l.row(h);
                                for c in 0..in_l {
                                    next[c] += r * w_row[c];
                                }
                            }
                        }
                        std::mem::swap(&mut cur, &mut next);
                    }
                    for i in 0..self.d {
                        let v = cur[i];
                        if !v.is_finite() {
                            return Err(ModelError::NonFiniteJacobian { node: j, sample: s });
                        }
                        rows[(s, i)] = v;
                    }
                }
                Ok(rows)
            })
            .collect();

        let mut jac = Array3::zeros((n, self.d, self.d));
        for (j, rows) in per_node.into_iter().enumerate() {
            let rows = rows?;
            for s in 0..n {
                for i in 0..self.d {
                    jac[(s, j, i)] = rows[(s, i)];
                }
            }
        }
        Ok(JacobianBatch::new(jac))
    }

    fn vjp_jacobian_params(&self, x: &Array2<f64>, cotangent: &Array3<f64>) -> Array1<f64> {
        assert_eq!(cotangent.dim(), (x.nrows(), self.d, self.d), "cotangent shape");
        let n = x.nrows();
        let depth = self.hidden.len();
        let act = self.activation;
        let per_node = self.params_per_node();

        // Per node j and sample n, <G[n][j][:], J[n][j][:]> is the JVP of
        // f_j at x_n with tangent G[n][j][:]; reverse-mode over that
        // augmented pass yields the θ-gradient. All sample reductions are
        // GEMMs, so the result does not depend on worker scheduling.
        let grads: Vec<Array1<f64>> = (0..self.d)
            .into_par_iter()
            .map(|j| {
                let node = &self.nodes[j];
                let (acts, _) = self.node_forward(node, x);
                let g_j = cotangent.index_axis(Axis(1), j).to_owned(); // N×d tangent rows

                // Tangent pass: V_l = U_{l-1} W_l^T, U_l = σ'(Z_l) ⊙ V_l.
                let mut v_layers: Vec<Array2<f64>> = Vec::with_capacity(depth);
                let mut u_layers: Vec<Array2<f64>> = Vec::with_capacity(depth);
                for l in 0..depth {
                    let u_prev = if l == 0 { &g_j } else { &u_layers[l - 1] };
                    let v = u_prev.dot(&node.ws[l].t());
                    let mut u = v.clone();
                    ndarray::Zip::from(&mut u).and(&acts[l]).for_each(|uv, &a| {
                        *uv *= act.d1_from_act(a);
                    });
                    v_layers.push(v);
                    u_layers.push(u);
                }

                let mut g_ws: Vec<Array2<f64>> =
                    node.ws.iter().map(|w| Array2::zeros(w.dim())).collect();
                let mut g_bs: Vec<Array1<f64>> =
                    node.bs.iter().map(|b| Array1::zeros(b.len())).collect();

                // Output layer: t_n = w_out · U_L[n]; b_out does not enter.
                let w_out = node.ws[depth].row(0).to_owned();
                let u_top = &u_layers[depth - 1];
                for (k, v) in u_top.sum_axis(Axis(0)).iter().enumerate() {
                    g_ws[depth][(0, k)] = *v;
                }

                // bar_U starts as w_out broadcast per sample; bar_A at the
                // top is zero (the primal output is not differentiated).
                let h_top = w_out.len();
                let mut bar_u = Array2::zeros((n, h_top));
                for s in 0..n {
                    for k in 0..h_top {
                        bar_u[(s, k)] = w_out[k];
                    }
                }
                let mut bar_a: Array2<f64> = Array2::zeros((n, h_top));

                for l in (0..depth).rev() {
                    let sigma1 = acts[l].mapv(|a| act.d1_from_act(a));
                    let sigma2 = acts[l].mapv(|a| act.d2_from_act(a));
                    let bar_v = &bar_u * &sigma1;
                    let bar_z = &bar_u * &v_layers[l] * &sigma2 + &bar_a * &sigma1;
                    let u_prev_view = if l == 0 { g_j.view() } else { u_layers[l - 1].view() };
                    let a_prev_view = if l == 0 { x.view() } else { acts[l - 1].view() };
                    g_ws[l] += &(bar_v.t().dot(&u_prev_view) + bar_z.t().dot(&a_prev_view));
                    if self.biases {
                        g_bs[l] += &bar_z.sum_axis(Axis(0));
                    }
                    if l > 0 {
                        bar_u = bar_v.dot(&node.ws[l]);
                        bar_a = bar_z.dot(&node.ws[l]);
                    }
                }

                // Flatten this node's gradient in θ layout order.
                let mut flat = Vec::with_capacity(per_node);
                for l in 0..node.ws.len() {
                    flat.extend(g_ws[l].iter().copied());
                    if self.biases {
                        flat.extend(g_bs[l].iter().copied());
                    }
                }
                Array1::from_vec(flat)
            })
            .collect();

        let mut grad = Array1::zeros(self.num_params());
        for (j, g) in grads.into_iter().enumerate() {
            grad.slice_mut(ndarray::s![j * per_node..(j + 1) * per_node])
                .assign(&g);
        }
        grad
    }

    fn grad_params_mse(&self, x: &Array2<f64>) -> (f64, Array1<f64>) {
        let n = x.nrows();
        let n_f = n as f64;
        let depth = self.hidden.len();
        let act = self.activation;
        let per_node = self.params_per_node();

        let results: Vec<(f64, Array1<f64>)> = (0..self.d)
            .into_par_iter()
            .map(|j| {
                let node = &self.nodes[j];
                let (acts, out) = self.node_forward(node, x);
                let target = x.column(j);
                let raw = &out - &target;
                let sq_sum: f64 = raw.iter().map(|r| r * r).sum();
                let r = raw.mapv(|v| v / n_f);

                let mut g_ws: Vec<Array2<f64>> =
                    node.ws.iter().map(|w| Array2::zeros(w.dim())).collect();
                let mut g_bs: Vec<Array1<f64>> =
                    node.bs.iter().map(|b| Array1::zeros(b.len())).collect();

                let w_out = node.ws[depth].row(0).to_owned();
                let a_top = &acts[depth - 1];
                let g_wout = a_top.t().dot(&r);
                for (k, v) in g_wout.iter().enumerate() {
                    g_ws[depth][(0, k)] = *v;
                }
                if self.biases {
                    g_bs[depth][0] = r.sum();
                }

                // bar_A at the top layer: r ⊗ w_out.
                let mut bar_a = Array2::zeros((n, w_out.len()));
                for s in 0..n {
                    for k in 0..w_out.len() {
                        bar_a[(s, k)] = r[s] * w_out[k];
                    }
                }

                for l in (0..depth).rev() {
                    let sigma1 = acts[l].mapv(|a| act.d1_from_act(a));
                    let bar_z = &bar_a * &sigma1;
                    let a_prev = if l == 0 { x.view() } else { acts[l - 1].view() };
                    g_ws[l] += &bar_z.t().dot(&a_prev);
                    if self.biases {
                        g_bs[l] += &bar_z.sum_axis(Axis(0));
                    }
                    if l > 0 {
                        bar_a = bar_z.dot(&node.ws[l]);
                    }
                }

                let mut flat = Vec::with_capacity(per_node);
                for l in 0..node.ws.len() {
                    flat.extend(g_ws[l].iter().copied());
                    if self.biases {
                        flat.extend(g_bs[l].iter().copied());
                    }
                }
                (sq_sum, Array1::from_vec(flat))
            })
            .collect();

        let mut grad = Array1::zeros(self.num_params());
        let mut total_sq = 0.0;
        for (j, (sq, g)) in results.into_iter().enumerate() {
            total_sq += sq;
            grad.slice_mut(ndarray::s![j * per_node..(j + 1) * per_node])
                .assign(&g);
        }
        (total_sq / (2.0 * n_f), grad)
    }

    fn checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint::Mlp {
            d: self.d,
            hidden: self.hidden.clone(),
            activation: self.activation,
            biases: self.biases,
            theta: self.params().to_vec(),
        }
    }

    fn as_mlp(&self) -> Option<&MlpSemModel> {
        Some(self)
    }
}
