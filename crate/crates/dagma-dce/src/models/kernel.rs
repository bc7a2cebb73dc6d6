//! Kernel ridge regressors in representer form: per node `j`,
//! `f_j(x) = Σ_m β_m κ(x, u_m)` with an ARD squared-exponential kernel.
//!
//! The kernel derivative is closed-form, so Jacobians are exact, and the
//! trainable parameters are the coefficients alone (inducing inputs and
//! lengthscales are fixed hyperparameters). Included to show the
//! objective is model-agnostic; exercised in tests rather than
//! benchmarks.

use super::{DifferentiableSemModel, JacobianBatch, ModelCheckpoint, ModelError};
use crate::linalg::Lu;
use ndarray::{Array1, Array2, Array3, ArrayView1};

/// ARD-SE kernel: `κ(x, u) = exp(-Σ_i (x_i - u_i)² / (2 ℓ_i²))`.
fn ard_se(x: ArrayView1<f64>, u: ArrayView1<f64>, lengthscales: &Array1<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        let diff = x[i] - u[i];
        let l = lengthscales[i];
        s += diff * diff / (2.0 * l * l);
    }
    (-s).exp()
}

#[derive(Debug, Clone, PartialEq)]
struct KernelNode {
    /// M×d inducing inputs.
    inducing: Array2<f64>,
    /// M coefficients (the trainable part).
    coeffs: Array1<f64>,
    /// Per-input lengthscales.
    lengthscales: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelRidgeSemModel {
    d: usize,
    nodes: Vec<KernelNode>,
}

impl KernelRidgeSemModel {
    /// Representer-form model with the training inputs as inducing points
    /// and coefficients fit per node by regularized least squares:
    /// `β_j = (K + λI)^{-1} x_j`.
    pub fn fit(x: &Array2<f64>, lengthscale: f64, lambda: f64) -> Result<Self, ModelError> {
        let (n, d) = x.dim();
        assert!(lengthscale > 0.0 && lambda >= 0.0);
        let lengthscales = Array1::from_elem(d, lengthscale);
        let mut gram = Array2::zeros((n, n));
        for a in 0..n {
            for b in 0..=a {
                let v = ard_se(x.row(a), x.row(b), &lengthscales);
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        for a in 0..n {
            gram[(a, a)] += lambda;
        }
        let lu = Lu::factor(gram.view()).map_err(|e| {
            ModelError::CheckpointMismatch(format!("gram factorization failed: {e}"))
        })?;
        let nodes = (0..d)
            .map(|j| {
                let y = x.column(j).to_owned();
                KernelNode {
                    inducing: x.clone(),
                    coeffs: lu.solve(&y),
                    lengthscales: lengthscales.clone(),
                }
            })
            .collect();
        Ok(Self { d, nodes })
    }

    /// Builds a model from explicit per-node pieces.
    pub fn from_parts(
        inducing: Vec<Array2<f64>>,
        coeffs: Vec<Array1<f64>>,
        lengthscales: Vec<Array1<f64>>,
    ) -> Self {
        let d = inducing.len();
        assert_eq!(coeffs.len(), d);
        assert_eq!(lengthscales.len(), d);
        let nodes = inducing
            .into_iter()
            .zip(coeffs)
            .zip(lengthscales)
            .map(|((ind, c), l)| {
                assert_eq!(ind.nrows(), c.len());
                assert_eq!(ind.ncols(), l.len());
                KernelNode { inducing: ind, coeffs: c, lengthscales: l }
            })
            .collect();
        Self { d, nodes }
    }

    pub(super) fn from_checkpoint(
        d: usize,
        inducing: &[Vec<f64>],
        lengthscales: &[Vec<f64>],
        theta: &[f64],
    ) -> Result<Self, ModelError> {
        if inducing.len() != d || lengthscales.len() != d {
            return Err(ModelError::CheckpointMismatch(format!(
                "kernel checkpoint lists {} inducing blocks for d={d}",
                inducing.len()
            )));
        }
        let mut nodes = Vec::with_capacity(d);
        let mut k = 0;
        for j in 0..d {
            if inducing[j].len() % d != 0 {
                return Err(ModelError::CheckpointMismatch(format!(
                    "inducing block {j} length {} not divisible by d={d}",
                    inducing[j].len()
                )));
            }
            let m = inducing[j].len() / d;
            if k + m > theta.len() || lengthscales[j].len() != d {
                return Err(ModelError::CheckpointMismatch(format!(
                    "kernel checkpoint block {j} inconsistent with θ length {}",
                    theta.len()
                )));
            }
            let ind = Array2::from_shape_vec((m, d), inducing[j].clone())
                .map_err(|e| ModelError::CheckpointMismatch(e.to_string()))?;
            nodes.push(KernelNode {
                inducing: ind,
                coeffs: Array1::from_vec(theta[k..k + m].to_vec()),
                lengthscales: Array1::from_vec(lengthscales[j].clone()),
            });
            k += m;
        }
        if k != theta.len() {
            return Err(ModelError::CheckpointMismatch(format!(
                "θ length {} does not match total inducing count {k}",
                theta.len()
            )));
        }
        Ok(Self { d, nodes })
    }

    /// Cross-kernel matrix K[n, m] = κ(x_n, u_m) for one node.
    fn cross(&self, j: usize, x: &Array2<f64>) -> Array2<f64> {
        let node = &self.nodes[j];
        let n = x.nrows();
        let m = node.inducing.nrows();
        let mut k = Array2::zeros((n, m));
        for a in 0..n {
            for b in 0..m {
                k[(a, b)] = ard_se(x.row(a), node.inducing.row(b), &node.lengthscales);
            }
        }
        k
    }
}

impl DifferentiableSemModel for KernelRidgeSemModel {
    fn dim(&self) -> usize {
        self.d
    }

    fn num_params(&self) -> usize {
        self.nodes.iter().map(|n| n.coeffs.len()).sum()
    }

    fn params(&self) -> Array1<f64> {
        let mut theta = Vec::with_capacity(self.num_params());
        for node in &self.nodes {
            theta.extend(node.coeffs.iter().copied());
        }
        Array1::from_vec(theta)
    }

    fn set_params(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.num_params());
        let mut k = 0;
        for node in &mut self.nodes {
            for c in node.coeffs.iter_mut() {
                *c = theta[k];
                k += 1;
            }
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        if x.ncols() != self.d {
            return Err(ModelError::DimMismatch { expected: self.d, got: x.ncols() });
        }
        let n = x.nrows();
        let mut out = Array2::zeros((n, self.d));
        for j in 0..self.d {
            let col = self.cross(j, x).dot(&self.nodes[j].coeffs);
            for s in 0..n {
                if !col[s].is_finite() {
                    return Err(ModelError::NonFiniteOutput { node: j, sample: s });
                }
                out[(s, j)] = col[s];
            }
        }
        Ok(out)
    }

    fn jacobian_batch(&self, x: &Array2<f64>) -> Result<JacobianBatch, ModelError> {
        if x.ncols() != self.d {
            return Err(ModelError::DimMismatch { expected: self.d, got: x.ncols() });
        }
        let n = x.nrows();
        let mut jac: Array3<f64> = Array3::zeros((n, self.d, self.d));
        for j in 0..self.d {
            let node = &self.nodes[j];
            let m = node.inducing.nrows();
            for s in 0..n {
                for b in 0..m {
                    let k_val = ard_se(x.row(s), node.inducing.row(b), &node.lengthscales);
                    let beta_k = node.coeffs[b] * k_val;
                    if beta_k == 0.0 {
                        continue;
                    }
                    for i in 0..self.d {
                        let l = node.lengthscales[i];
                        let dk = -(x[(s, i)] - node.inducing[(b, i)]) / (l * l);
                        jac[(s, j, i)] += beta_k * dk;
                    }
                }
                for i in 0..self.d {
                    if !jac[(s, j, i)].is_finite() {
                        return Err(ModelError::NonFiniteJacobian { node: j, sample: s });
                    }
                }
            }
        }
        Ok(JacobianBatch::new(jac))
    }

    fn vjp_jacobian_params(&self, x: &Array2<f64>, cotangent: &Array3<f64>) -> Array1<f64> {
        assert_eq!(cotangent.dim(), (x.nrows(), self.d, self.d));
        let n = x.nrows();
        let mut grad = Vec::with_capacity(self.num_params());
        for j in 0..self.d {
            let node = &self.nodes[j];
            let m = node.inducing.nrows();
            // J is linear in β: ∂<G,J>/∂β_m = Σ_{n,i} G[n][j][i] ∂κ/∂x_i(x_n, u_m).
            for b in 0..m {
                let mut acc = 0.0;
                for s in 0..n {
                    let k_val = ard_se(x.row(s), node.inducing.row(b), &node.lengthscales);
                    for i in 0..self.d {
                        let l = node.lengthscales[i];
                        let dk = -k_val * (x[(s, i)] - node.inducing[(b, i)]) / (l * l);
                        acc += cotangent[(s, j, i)] * dk;
                    }
                }
                grad.push(acc);
            }
        }
        Array1::from_vec(grad)
    }

    fn grad_params_mse(&self, x: &Array2<f64>) -> (f64, Array1<f64>) {
        let n = x.nrows() as f64;
        let mut mse = 0.0;
        let mut grad = Vec::with_capacity(self.num_params());
        for j in 0..self.d {
            let k = self.cross(j, x);
            let pred = k.dot(&self.nodes[j].coeffs);
            let raw = &pred - &x.column(j);
            mse += raw.iter().map(|r| r * r).sum::<f64>();
            let g = k.t().dot(&raw.mapv(|v| v / n));
            grad.extend(g.iter().copied());
        }
        (mse / (2.0 * n), Array1::from_vec(grad))
    }

    fn checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint::KernelRidge {
            d: self.d,
            inducing: self
                .nodes
                .iter()
                .map(|n| n.inducing.iter().copied().collect())
                .collect(),
            lengthscales: self
                .nodes
                .iter()
                .map(|n| n.lengthscales.iter().copied().collect())
                .collect(),
            theta: self.params().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{random_cotangent, random_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_at_inducing_point_is_one() {
        // M=1, β=1: prediction at the inducing point itself is κ(x,x)=1.
        let inducing = Array2::from_shape_vec((1, 2), vec![0.3, -0.7]).unwrap();
        let m = KernelRidgeSemModel::from_parts(
            vec![inducing.clone(), inducing.clone()],
            vec![ndarray::array![1.0], ndarray::array![1.0]],
            vec![ndarray::array![1.0, 1.0], ndarray::array![1.0, 1.0]],
        );
        let out = m.forward(&inducing).unwrap();
        assert!((out[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((out[(0, 1)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kernel_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 3;
        let inducing = random_matrix(4, d, 1.0, &mut rng);
        let nodes_ind: Vec<_> = (0..d).map(|_| inducing.clone()).collect();
        let coeffs: Vec<_> = (0..d)
            .map(|_| Array1::from_shape_fn(4, |_| rand::Rng::gen_range(&mut rng, -1.0..1.0)))
            .collect();
        let ls: Vec<_> = (0..d)
            .map(|_| Array1::from_shape_fn(d, |_| rand::Rng::gen_range(&mut rng, 0.7..1.5)))
            .collect();
        let m = KernelRidgeSemModel::from_parts(nodes_ind, coeffs, ls);
        let x = random_matrix(3, d, 1.0, &mut rng);
        let jac = m.jacobian_batch(&x).unwrap();
        let eps = 1e-6;
        for s in 0..3 {
            for i in 0..d {
                let mut xp = x.clone();
                xp[(s, i)] += eps;
                let mut xm = x.clone();
                xm[(s, i)] -= eps;
                let fp = m.forward(&xp).unwrap();
                let fm = m.forward(&xm).unwrap();
                for j in 0..d {
                    let fd = (fp[(s, j)] - fm[(s, j)]) / (2.0 * eps);
                    assert!(
                        (jac.values[(s, j, i)] - fd).abs() < 1e-6,
                        "J[{s},{j},{i}] = {} vs fd {fd}",
                        jac.values[(s, j, i)]
                    );
                }
            }
        }
    }

    #[test]
    fn vjp_matches_direct_linear_form() {
        // J is linear in β, so the vjp must equal the contraction of the
        // cotangent with per-coefficient Jacobian columns.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = 2;
        let inducing = random_matrix(3, d, 1.0, &mut rng);
        let m = KernelRidgeSemModel::from_parts(
            vec![inducing.clone(), inducing.clone()],
            vec![
                Array1::from_shape_fn(3, |_| rand::Rng::gen_range(&mut rng, -1.0..1.0)),
                Array1::from_shape_fn(3, |_| rand::Rng::gen_range(&mut rng, -1.0..1.0)),
            ],
            vec![ndarray::array![1.0, 1.2], ndarray::array![0.8, 1.0]],
        );
        let x = random_matrix(5, d, 1.0, &mut rng);
        let g = random_cotangent(5, d, &mut rng);
        let analytic = m.vjp_jacobian_params(&x, &g);

        // Direct route: evaluate <G, J(β)> at unit coefficient vectors.
        let theta0 = m.params();
        let mut direct: Array1<f64> = Array1::zeros(theta0.len());
        for k in 0..theta0.len() {
            let mut probe = m.clone();
            let mut unit = vec![0.0; theta0.len()];
            unit[k] = 1.0;
            probe.set_params(&unit);
            let jac = probe.jacobian_batch(&x).unwrap();
            direct[k] = jac.values.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        }
        for (a, b) in analytic.iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn fit_interpolates_with_small_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(12, 2, 1.0, &mut rng);
        let m = KernelRidgeSemModel::fit(&x, 1.0, 1e-8).unwrap();
        let pred = m.forward(&x).unwrap();
        for s in 0..12 {
            for j in 0..2 {
                assert!((pred[(s, j)] - x[(s, j)]).abs() < 1e-4);
            }
        }
        let (mse, _) = m.grad_params_mse(&x);
        assert!(mse < 1e-8);
    }
}
