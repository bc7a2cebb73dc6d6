//! Structural evaluation: SHD, directed precision/recall/F1, SID, and
//! weighted-matrix comparisons (Frobenius distance, Kendall τ-b,
//! Spearman ρ over off-diagonal entries).
//!
//! SID counts ordered pairs `(i, j)` whose causal effect would be
//! mis-estimated when the estimated graph's parent set of `i` is used as
//! an adjustment set in the true graph. Validity is decided by the
//! generalized adjustment criterion, with d-separation checked exactly by
//! moralized-ancestral-graph reachability. When `j` is an estimated
//! parent of `i` the estimate predicts no effect; that case falls out of
//! the same criterion (a causal path puts `j` in the forbidden set, and
//! otherwise conditioning on `j` blocks every path).

use crate::graphs::BinaryDag;
use crate::graphs::WeightedAdjacency;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("graphs have different sizes: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("input graph has a cycle through {0:?}")]
    CyclicInput(Vec<usize>),
    #[error("need at least 2 paired entries, got {0}")]
    TooFewPairs(usize),
    #[error("ranking is degenerate (an input is constant)")]
    DegenerateRanking,
}

/// Everything the evaluation harness reports for one estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub shd: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Geometric mean of precision and recall (Fowlkes–Mallows), kept
    /// alongside the harmonic-mean F1 so either convention is available.
    pub fm_index: f64,
    pub sid: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frobenius_to_truth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kendall_tau_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spearman_rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_s: Option<f64>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "shd,precision,recall,f1,fm_index,sid,frobenius_to_truth,kendall_tau_b,spearman_rho,wall_time_s";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.shd,
            self.precision,
            self.recall,
            self.f1,
            self.fm_index,
            self.sid,
            opt(self.frobenius_to_truth),
            opt(self.kendall_tau_b),
            opt(self.spearman_rho),
            opt(self.wall_time_s),
        )
    }
}

/// Structural Hamming distance with reversal cost 1: over unordered node
/// pairs, count those whose edge status (none / i→j / j→i) differs.
pub fn shd(est: &BinaryDag, truth: &BinaryDag) -> Result<usize, MetricsError> {
    if est.d != truth.d {
        return Err(MetricsError::DimensionMismatch(est.d, truth.d));
    }
    let mut count = 0;
    for i in 0..est.d {
        for j in (i + 1)..est.d {
            let status = |g: &BinaryDag| (g.has_edge(i, j), g.has_edge(j, i));
            if status(est) != status(truth) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Directed-edge classification over ordered pairs. Empty estimates give
/// precision 1 by convention; empty truths give recall 1; F1 is 0 when
/// precision + recall is 0.
pub fn precision_recall_f1(
    est: &BinaryDag,
    truth: &BinaryDag,
) -> Result<(f64, f64, f64), MetricsError> {
    if est.d != truth.d {
        return Err(MetricsError::DimensionMismatch(est.d, truth.d));
    }
    let tp = est.edges.intersection(&truth.edges).count() as f64;
    let precision = if est.edges.is_empty() { 1.0 } else { tp / est.edges.len() as f64 };
    let recall = if truth.edges.is_empty() { 1.0 } else { tp / truth.edges.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}

/// Geometric mean of precision and recall.
pub fn fowlkes_mallows(precision: f64, recall: f64) -> f64 {
    (precision * recall).sqrt()
}

/// Adjacency lists plus descendant closure of the true graph, shared by
/// all SID queries.
struct SidContext {
    d: usize,
    parents: Vec<Vec<usize>>,
    /// descendants[v][w]: w is reachable from v by a directed path
    /// (w = v included).
    descendants: Vec<Vec<bool>>,
}

impl SidContext {
    fn new(truth: &BinaryDag) -> Self {
        let d = truth.d;
        let mut children = vec![Vec::new(); d];
        let mut parents = vec![Vec::new(); d];
        for &(i, j) in &truth.edges {
            children[i].push(j);
            parents[j].push(i);
        }
        let mut descendants = vec![vec![false; d]; d];
        for v in 0..d {
            let mut stack = vec![v];
            descendants[v][v] = true;
            while let Some(u) = stack.pop() {
                for &w in &children[u] {
                    if !descendants[v][w] {
                        descendants[v][w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        Self { d, parents, descendants }
    }

    /// Is `z` a valid adjustment set for the effect of `i` on `j`?
    /// Generalized adjustment criterion specialized to singleton
    /// treatment and outcome in a DAG.
    fn adjustment_valid(&self, i: usize, j: usize, z: &[bool]) -> bool {
        // Causal nodes: on some proper causal path from i to j, i excluded.
        let mut causal = vec![false; self.d];
        for c in 0..self.d {
            if c != i && self.descendants[i][c] && self.descendants[c][j] {
                causal[c] = true;
            }
        }
        // Forbidden set: descendants of causal nodes, plus i itself.
        let mut forbidden = vec![false; self.d];
        forbidden[i] = true;
        for c in 0..self.d {
            if causal[c] {
                for w in 0..self.d {
                    if self.descendants[c][w] {
                        forbidden[w] = true;
                    }
                }
            }
        }
        for v in 0..self.d {
            if z[v] && forbidden[v] {
                return false;
            }
        }

        // Proper back-door graph: drop i's outgoing edges that start a
        // causal path to j; then z must d-separate i from j.
        let blocked_child = |c: usize| causal[c];
        self.d_separated_pbd(i, j, z, blocked_child)
    }

    /// d-separation of i and j given z in the graph with edges `i -> c`
    /// removed for children where `drop_edge(c)` holds, via the
    /// moralized-ancestral-graph construction.
    fn d_separated_pbd<F: Fn(usize) -> bool>(
        &self,
        i: usize,
        j: usize,
        z: &[bool],
        drop_edge: F,
    ) -> bool {
        let d = self.d;
        // Parents in the modified graph.
        let parents_of = |v: usize| -> Vec<usize> {
            self.parents[v]
                .iter()
                .copied()
                .filter(|&p| !(p == i && drop_edge(v)))
                .collect()
        };

        // Ancestors (with selves) of {i, j} ∪ z in the modified graph.
        let mut in_closure = vec![false; d];
        let mut stack: Vec<usize> = Vec::new();
        let push = |v: usize, closure: &mut Vec<bool>, stack: &mut Vec<usize>| {
            if !closure[v] {
                closure[v] = true;
                stack.push(v);
            }
        };
        push(i, &mut in_closure, &mut stack);
        push(j, &mut in_closure, &mut stack);
        for v in 0..d {
            if z[v] {
                push(v, &mut in_closure, &mut stack);
            }
        }
        while let Some(u) = stack.pop() {
            for p in parents_of(u) {
                if !in_closure[p] {
                    in_closure[p] = true;
                    stack.push(p);
                }
            }
        }

        // Moralize within the closure: connect each node to its parents
        // and marry parents of a common child; then remove z and test
        // reachability.
        let mut undirected = vec![Vec::new(); d];
        for v in 0..d {
            if !in_closure[v] {
                continue;
            }
            let ps = parents_of(v);
            for &p in &ps {
                if in_closure[p] {
                    undirected[v].push(p);
                    undirected[p].push(v);
                }
            }
            for a in 0..ps.len() {
                for b in (a + 1)..ps.len() {
                    let (p, q) = (ps[a], ps[b]);
                    if in_closure[p] && in_closure[q] {
                        undirected[p].push(q);
                        undirected[q].push(p);
                    }
                }
            }
        }

        let mut visited = vec![false; d];
        let mut queue = std::collections::VecDeque::new();
        visited[i] = true;
        queue.push_back(i);
        while let Some(u) = queue.pop_front() {
            if u == j {
                return false;
            }
            for &w in &undirected[u] {
                if !visited[w] && !z[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
        true
    }
}

/// Structural intervention distance: the number of ordered pairs
/// `(i, j)` for which `Pa_est(i)` is not a valid adjustment set in the
/// true graph.
pub fn sid(est: &BinaryDag, truth: &BinaryDag) -> Result<usize, MetricsError> {
    if est.d != truth.d {
        return Err(MetricsError::DimensionMismatch(est.d, truth.d));
    }
    est.topological_order().map_err(MetricsError::CyclicInput)?;
    truth.topological_order().map_err(MetricsError::CyclicInput)?;

    let ctx = SidContext::new(truth);
    let d = truth.d;
    let mut mistakes = 0;
    for i in 0..d {
        let mut z = vec![false; d];
        for p in est.parents(i) {
            z[p] = true;
        }
        for j in 0..d {
            if j != i && !ctx.adjustment_valid(i, j, &z) {
                mistakes += 1;
            }
        }
    }
    Ok(mistakes)
}

/// Off-diagonal entries of two same-shape matrices as paired samples,
/// row-major.
fn offdiag_pairs(a: &WeightedAdjacency, b: &WeightedAdjacency) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    if a.d() != b.d() {
        return Err(MetricsError::DimensionMismatch(a.d(), b.d()));
    }
    let d = a.d();
    let mut xs = Vec::with_capacity(d * d - d);
    let mut ys = Vec::with_capacity(d * d - d);
    for i in 0..d {
        for j in 0..d {
            if i != j {
                xs.push(a.values[(i, j)]);
                ys.push(b.values[(i, j)]);
            }
        }
    }
    Ok((xs, ys))
}

/// Count of strict inversions in `ys` by bottom-up merge sort.
fn merge_count_inversions(ys: &mut [f64]) -> u64 {
    let n = ys.len();
    let mut buf = vec![0.0; n];
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo + width < n {
            let mid = lo + width;
            let hi = (mid + width).min(n);
            let (mut a, mut b, mut k) = (lo, mid, lo);
            while a < mid || b < hi {
                if a < mid && (b >= hi || ys[a] <= ys[b]) {
                    buf[k] = ys[a];
                    a += 1;
                } else {
                    // ys[b] jumps over the remaining left-run elements,
                    // each strictly greater.
                    swaps += (mid - a) as u64;
                    buf[k] = ys[b];
                    b += 1;
                }
                k += 1;
            }
            ys[lo..hi].copy_from_slice(&buf[lo..hi]);
            lo = hi;
        }
        width *= 2;
    }
    swaps
}

fn tie_count(sorted: &[f64]) -> u64 {
    let mut ties = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            ties += run * (run - 1) / 2;
            run = 1;
        }
    }
    ties + run * (run - 1) / 2
}

/// Kendall τ-b with tie correction between the off-diagonal entries of
/// two weighted adjacencies.
pub fn kendall_tau_b(a: &WeightedAdjacency, b: &WeightedAdjacency) -> Result<f64, MetricsError> {
    let (xs, ys) = offdiag_pairs(a, b)?;
    kendall_tau_b_pairs(&xs, &ys)
}

/// τ-b on raw paired samples: sort by (x, y), count ties, and count
/// discordances as y-inversions.
pub fn kendall_tau_b_pairs(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    let n = xs.len();
    if n != ys.len() {
        return Err(MetricsError::DimensionMismatch(n, ys.len()));
    }
    if n < 2 {
        return Err(MetricsError::TooFewPairs(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| {
        xs[p].partial_cmp(&xs[q])
            .unwrap()
            .then(ys[p].partial_cmp(&ys[q]).unwrap())
    });
    let sorted_x: Vec<f64> = order.iter().map(|&k| xs[k]).collect();
    let mut sorted_y: Vec<f64> = order.iter().map(|&k| ys[k]).collect();

    // Joint ties within x-runs.
    let mut joint_ties = 0u64;
    let mut run_start = 0;
    for k in 1..=n {
        if k == n || sorted_x[k] != sorted_x[run_start] {
            joint_ties += tie_count(&sorted_y[run_start..k]);
            run_start = k;
        }
    }
    let x_ties = tie_count(&sorted_x);
    let mut y_sorted_alone = ys.to_vec();
    y_sorted_alone.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let y_ties = tie_count(&y_sorted_alone);

    let discordant = merge_count_inversions(&mut sorted_y);
    let total = (n as u64) * (n as u64 - 1) / 2;
    let denom = ((total - x_ties) as f64) * ((total - y_ties) as f64);
    if denom <= 0.0 {
        return Err(MetricsError::DegenerateRanking);
    }
    let con_minus_dis =
        total as f64 - x_ties as f64 - y_ties as f64 + joint_ties as f64 - 2.0 * discordant as f64;
    Ok(con_minus_dis / denom.sqrt())
}

/// Tie-averaged ranks (1-based).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| values[p].partial_cmp(&values[q]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut k = 0;
    while k < n {
        let mut end = k + 1;
        while end < n && values[order[end]] == values[order[k]] {
            end += 1;
        }
        let avg = (k + 1 + end) as f64 / 2.0;
        for &idx in &order[k..end] {
            ranks[idx] = avg;
        }
        k = end;
    }
    ranks
}

/// Spearman ρ: Pearson correlation of tie-averaged ranks of the
/// off-diagonal entries. A constant input has no ranking and errors.
pub fn spearman_rho(a: &WeightedAdjacency, b: &WeightedAdjacency) -> Result<f64, MetricsError> {
    let (xs, ys) = offdiag_pairs(a, b)?;
    spearman_rho_pairs(&xs, &ys)
}

pub fn spearman_rho_pairs(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    let n = xs.len();
    if n != ys.len() {
        return Err(MetricsError::DimensionMismatch(n, ys.len()));
    }
    if n < 2 {
        return Err(MetricsError::TooFewPairs(n));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n_f = n as f64;
    let mean = (n_f + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for k in 0..n {
        let dx = rx[k] - mean;
        let dy = ry[k] - mean;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(MetricsError::DegenerateRanking);
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Entrywise root-sum-square difference over the full matrices.
pub fn frobenius_diff(a: &WeightedAdjacency, b: &WeightedAdjacency) -> Result<f64, MetricsError> {
    if a.d() != b.d() {
        return Err(MetricsError::DimensionMismatch(a.d(), b.d()));
    }
    Ok(a.values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}
