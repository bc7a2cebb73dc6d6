//! The log-det acyclicity function `h(A) = -log det(sI - A∘A) + d log s`,
//! its gradient, and the M-matrix feasibility check that the solver must
//! never violate. A trace-exponential variant is kept for diagnostics
//! only.
//!
//! `h` is zero exactly on DAG-supported matrices inside the M-matrix
//! region `{A : sI - A∘A is a nonsingular M-matrix}`, which for the
//! Z-matrix `sI - A∘A` is equivalent to the spectral radius of `A∘A`
//! being strictly below `s`.

use crate::graphs::WeightedAdjacency;
use crate::linalg::{expm, spectral_radius_nonneg, Lu};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

const RADIUS_MAX_SQUARINGS: usize = 200;
const RADIUS_TOL: f64 = 1e-10;

/// Which feasibility check rejected the matrix. The LU sign alone does
/// not certify the M-matrix property, so both checks run and the report
/// says which one fired.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InfeasibleReason {
    /// det(sI - A∘A) <= 0 along the LU factorization.
    NonPositiveDeterminant,
    /// Spectral radius of A∘A reached or exceeded s.
    SpectralRadius { rho: f64, s: f64 },
}

/// Outcome of evaluating `h`: a value inside the feasible region, or a
/// typed marker outside it. Infeasibility is an expected outcome the
/// solver backs off from, not an exception.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HValue {
    Feasible(f64),
    Infeasible(InfeasibleReason),
}

impl HValue {
    pub fn feasible(self) -> Option<f64> {
        match self {
            HValue::Feasible(v) => Some(v),
            HValue::Infeasible(_) => None,
        }
    }

    pub fn expect_feasible(self) -> f64 {
        match self {
            HValue::Feasible(v) => v,
            HValue::Infeasible(r) => panic!("h evaluated outside the feasible region: {r:?}"),
        }
    }
}

/// Feasibility diagnostics from [`check_feasible`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Power-iteration estimate of the spectral radius of A∘A.
    pub spectral_radius: f64,
    pub s: f64,
    pub reason: Option<InfeasibleReason>,
}

fn s_i_minus_a_squared(a: &WeightedAdjacency, s: f64) -> Array2<f64> {
    let d = a.d();
    let mut m = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let v = a.values[(i, j)];
            m[(i, j)] = if i == j { s - v * v } else { -v * v };
        }
    }
    m
}

/// Evaluates `h(A, s) = -log det(sI - A∘A) + d log s`, or reports
/// infeasibility when `sI - A∘A` is not an M-matrix.
pub fn h_dagma(a: &WeightedAdjacency, s: f64) -> HValue {
    assert!(s > 0.0, "s must be positive");
    let d = a.d();
    let a_sq = a.values.mapv(|x| x * x);
    let rho = spectral_radius_nonneg(a_sq.view(), RADIUS_MAX_SQUARINGS, RADIUS_TOL);
    if rho >= s {
        return HValue::Infeasible(InfeasibleReason::SpectralRadius { rho, s });
    }
    let m = s_i_minus_a_squared(a, s);
    let lu = match Lu::factor(m.view()) {
        Ok(lu) => lu,
        Err(_) => return HValue::Infeasible(InfeasibleReason::NonPositiveDeterminant),
    };
    let (sign, log_abs_det) = lu.sign_log_det();
    if sign <= 0.0 {
        return HValue::Infeasible(InfeasibleReason::NonPositiveDeterminant);
    }
    HValue::Feasible(-log_abs_det + d as f64 * s.ln())
}

/// Gradient of `h` in `A`: `2 (sI - A∘A)^{-T} ∘ A`. Requires a feasible
/// `(A, s)` pair.
pub fn grad_h_dagma(a: &WeightedAdjacency, s: f64) -> Result<Array2<f64>, InfeasibleReason> {
    match h_dagma(a, s) {
        HValue::Infeasible(r) => Err(r),
        HValue::Feasible(_) => {
            let d = a.d();
            let m = s_i_minus_a_squared(a, s);
            let inv = Lu::factor(m.view())
                .map_err(|_| InfeasibleReason::NonPositiveDeterminant)?
                .inverse();
            let mut grad = Array2::zeros((d, d));
            for i in 0..d {
                for j in 0..d {
                    grad[(i, j)] = 2.0 * inv[(j, i)] * a.values[(i, j)];
                }
            }
            Ok(grad)
        }
    }
}

/// True iff `sI - A∘A` is a nonsingular M-matrix, with the spectral-radius
/// estimate reported alongside.
pub fn check_feasible(a: &WeightedAdjacency, s: f64) -> FeasibilityReport {
    let a_sq = a.values.mapv(|x| x * x);
    let rho = spectral_radius_nonneg(a_sq.view(), RADIUS_MAX_SQUARINGS, RADIUS_TOL);
    if rho >= s {
        return FeasibilityReport {
            feasible: false,
            spectral_radius: rho,
            s,
            reason: Some(InfeasibleReason::SpectralRadius { rho, s }),
        };
    }
    let m = s_i_minus_a_squared(a, s);
    let det_positive = match Lu::factor(m.view()) {
        Ok(lu) => lu.sign_log_det().0 > 0.0,
        Err(_) => false,
    };
    FeasibilityReport {
        feasible: det_positive,
        spectral_radius: rho,
        s,
        reason: if det_positive {
            None
        } else {
            Some(InfeasibleReason::NonPositiveDeterminant)
        },
    }
}

/// Trace-exponential acyclicity value `trace(exp(A∘A)) - d`. Reporting
/// diagnostic only; the solver never touches it.
pub fn h_notears_diag(a: &WeightedAdjacency) -> f64 {
    let d = a.d();
    let a_sq = a.values.mapv(|x| x * x);
    let e = expm(a_sq.view());
    let mut trace = 0.0;
    for i in 0..d {
        trace += e[(i, i)];
    }
    trace - d as f64
}
