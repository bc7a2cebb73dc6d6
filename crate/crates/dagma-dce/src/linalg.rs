//! Dense linear-algebra kernels used by the constraint, the GP sampler,
//! and the kernel model: LU factorization with log-space determinants,
//! Cholesky with jitter escalation, power iteration, and a
//! scaling-and-squaring matrix exponential.
//!
//! Everything here is f64 and deterministic; matrices at desk scale
//! (d ≤ ~50 for constraints, N ≤ a few thousand for Gram matrices).

use ndarray::{Array1, Array2, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot {pivot} at column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("matrix is not positive definite even after jitter up to {max_jitter}")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
}

/// LU factorization with partial pivoting, stored packed (L below the
/// diagonal with unit diagonal implied, U on and above).
pub struct Lu {
    packed: Array2<f64>,
    perm: Vec<usize>,
    /// Sign of the permutation (+1.0 or -1.0).
    sign: f64,
}

impl Lu {
    pub fn factor(a: ArrayView2<f64>) -> Result<Self, LinalgError> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU needs a square matrix");
        let mut m = a.to_owned();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;

        for k in 0..n {
            // Partial pivot: largest magnitude in column k at or below row k.
            let mut p = k;
            let mut best = m[(k, k)].abs();
            for r in (k + 1)..n {
                let v = m[(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(LinalgError::Singular { col: k, pivot: 0.0 });
            }
            if p != k {
                for c in 0..n {
                    m.swap((k, c), (p, c));
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let piv = m[(k, k)];
            for r in (k + 1)..n {
                let f = m[(r, k)] / piv;
                m[(r, k)] = f;
                for c in (k + 1)..n {
                    m[(r, c)] -= f * m[(k, c)];
                }
            }
        }
        Ok(Self { packed: m, perm, sign })
    }

    /// (sign of det, sum of ln|U_kk|). `sign` is 0.0 only for exactly
    /// singular input, which `factor` already rejects.
    pub fn sign_log_det(&self) -> (f64, f64) {
        let n = self.packed.nrows();
        let mut sign = self.sign;
        let mut log_abs = 0.0;
        for k in 0..n {
            let u = self.packed[(k, k)];
            if u < 0.0 {
                sign = -sign;
            }
            log_abs += u.abs().ln();
        }
        (sign, log_abs)
    }

    /// Solve A x = b for a single right-hand side.
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.packed.nrows();
        assert_eq!(b.len(), n);
        // Apply permutation, then forward/back substitution.
        let mut x = Array1::zeros(n);
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.packed[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.packed[(i, j)] * x[j];
            }
            x[i] = s / self.packed[(i, i)];
        }
        x
    }

    /// Full inverse, column by column.
    pub fn inverse(&self) -> Array2<f64> {
        let n = self.packed.nrows();
        let mut inv = Array2::zeros((n, n));
        let mut e = Array1::zeros(n);
        for c in 0..n {
            e.fill(0.0);
            e[c] = 1.0;
            let col = self.solve(&e);
            for r in 0..n {
                inv[(r, c)] = col[r];
            }
        }
        inv
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>, LinalgError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "Cholesky needs a square matrix");
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(LinalgError::Singular { col: i, pivot: s });
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Cholesky with jitter escalation: tries `A + jitter*I` with jitter
/// starting at `jitter0` and multiplying by 10 until `max_jitter`.
/// Returns the factor and the jitter that succeeded.
pub fn cholesky_with_jitter(
    a: ArrayView2<f64>,
    jitter0: f64,
    max_jitter: f64,
) -> Result<(Array2<f64>, f64), LinalgError> {
    let n = a.nrows();
    let mut jitter = jitter0;
    loop {
        let mut aj = a.to_owned();
        for i in 0..n {
            aj[(i, i)] += jitter;
        }
        match cholesky(aj.view()) {
            Ok(l) => return Ok((l, jitter)),
            Err(_) => {
                jitter *= 10.0;
                if jitter > max_jitter {
                    return Err(LinalgError::NotPositiveDefinite { max_jitter });
                }
            }
        }
    }
}

/// Spectral-radius estimate of a nonnegative matrix via matrix powers:
/// `ρ = lim_k ‖A^(2^k)‖^(1/2^k)` (Gelfand), computed by repeated squaring
/// with per-step normalization in log space.
///
/// Vector power iteration converges only polynomially on defective
/// spectra — a nilpotent matrix (exactly the DAG case) never gets near
/// zero in any fixed iteration budget — while squaring annihilates it
/// exactly and drives the general defective error like `log(k)/k` with
/// `k = 2^iters`. The estimate approaches ρ from above, so feasibility
/// checks built on it are conservative.
pub fn spectral_radius_nonneg(a: ArrayView2<f64>, max_squarings: usize, tol: f64) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // Max row sum (∞-norm); submultiplicative, so ‖A^k‖^(1/k) ≥ ρ.
    let inf_norm = |m: &Array2<f64>| -> f64 {
        (0..m.nrows())
            .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0_f64, f64::max)
    };

    let norm0 = inf_norm(&a.to_owned());
    if norm0 == 0.0 {
        return 0.0;
    }
    // unit: A^(2^j) / exp(log_norm_j); log_norm_j = log ‖A^(2^j)‖.
    let mut unit = a.mapv(|v| v / norm0);
    let mut log_norm = norm0.ln();
    let mut estimate = norm0;
    for j in 1..=max_squarings {
        let squared = unit.dot(&unit);
        let sq_norm = inf_norm(&squared);
        if sq_norm == 0.0 {
            return 0.0;
        }
        log_norm = 2.0 * log_norm + sq_norm.ln();
        unit = squared.mapv(|v| v / sq_norm);
        let next = (log_norm / f64::powi(2.0, j as i32)).exp();
        if (next - estimate).abs() <= tol * next.max(1.0) {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Matrix exponential by scaling and squaring with a truncated Taylor core.
///
/// Accurate to near machine precision for the modest norms seen in
/// acyclicity diagnostics; not tuned for extreme inputs.
pub fn expm(a: ArrayView2<f64>) -> Array2<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    // Scale so the 1-norm of the scaled matrix is at most 0.5.
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let k = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.mapv(|x| x / f64::powi(2.0, k as i32));

    // Taylor series: with ‖B‖ ≤ 0.5, 20 terms reach < 1e-19 truncation.
    let mut result = Array2::eye(n);
    let mut term = Array2::eye(n);
    for i in 1..=20 {
        term = term.dot(&scaled) / (i as f64);
        result += &term;
    }
    for _ in 0..k {
        result = result.dot(&result);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lu_log_det_matches_direct_2x2() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let lu = Lu::factor(a.view()).unwrap();
        let (sign, log_abs) = lu.sign_log_det();
        assert_eq!(sign, 1.0);
        assert!((log_abs - 5.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lu_detects_negative_determinant() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let lu = Lu::factor(a.view()).unwrap();
        let (sign, _) = lu.sign_log_det();
        assert_eq!(sign, -1.0);
    }

    #[test]
    fn lu_solve_recovers_rhs() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let x_true = array![1.0, -2.0, 0.5];
        let b = a.dot(&x_true);
        let lu = Lu::factor(a.view()).unwrap();
        let x = lu.solve(&b);
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_inverse_times_matrix_is_identity() {
        let a = array![[3.0, 0.2, -0.1], [0.4, 2.0, 0.3], [-0.2, 0.1, 1.5]];
        let inv = Lu::factor(a.view()).unwrap().inverse();
        let prod = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let l = cholesky(a.view()).unwrap();
        let rec = l.dot(&l.t());
        for i in 0..3 {
            for j in 0..3 {
                assert!((rec[(i, j)] - a[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_jitter_escalates_on_singular_gram() {
        // Rank-1 Gram matrix: plain Cholesky fails, jitter fixes it.
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(cholesky(a.view()).is_err());
        let (_, jitter) = cholesky_with_jitter(a.view(), 1e-8, 1e-4).unwrap();
        assert!(jitter >= 1e-8 && jitter <= 1e-4);
    }

    #[test]
    fn spectral_radius_of_two_cycle() {
        // [[0,1],[1,0]] has eigenvalues ±1.
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let rho = spectral_radius_nonneg(a.view(), 200, 1e-10);
        assert!((rho - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_radius_of_periodic_asymmetric_cycle() {
        // [[0,1],[4,0]] has eigenvalues ±2; plain power iteration
        // oscillates here, the shifted iteration must not.
        let a = array![[0.0, 1.0], [4.0, 0.0]];
        let rho = spectral_radius_nonneg(a.view(), 500, 1e-12);
        assert!((rho - 2.0).abs() < 1e-8, "rho = {rho}");
    }

    #[test]
    fn spectral_radius_of_nilpotent_is_zero() {
        let a = array![[0.0, 0.7, 0.3], [0.0, 0.0, 0.9], [0.0, 0.0, 0.0]];
        let rho = spectral_radius_nonneg(a.view(), 200, 1e-10);
        assert!(rho.abs() < 1e-9);
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let a = Array2::zeros((3, 3));
        let e = expm(a.view());
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((e[(i, j)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn expm_matches_closed_form_antidiagonal() {
        // exp([[0,1],[1,0]]) = [[cosh 1, sinh 1], [sinh 1, cosh 1]].
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let e = expm(a.view());
        assert!((e[(0, 0)] - 1.0_f64.cosh()).abs() < 1e-12);
        assert!((e[(0, 1)] - 1.0_f64.sinh()).abs() < 1e-12);
        assert!((e[(1, 0)] - 1.0_f64.sinh()).abs() < 1e-12);
        assert!((e[(1, 1)] - 1.0_f64.cosh()).abs() < 1e-12);
    }

    #[test]
    fn expm_diagonal() {
        let a = array![[1.0, 0.0], [0.0, -2.0]];
        let e = expm(a.view());
        assert!((e[(0, 0)] - 1.0_f64.exp()).abs() < 1e-12);
        assert!((e[(1, 1)] - (-2.0_f64).exp()).abs() < 1e-12);
    }
}
