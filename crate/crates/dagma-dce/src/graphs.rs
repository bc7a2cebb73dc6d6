//! DAG representation, Erdős–Rényi DAG sampling, acyclicity checks, and
//! thresholding of weighted adjacencies into binary graphs.
//!
//! Convention used throughout the crate: entry `(i, j)` of an adjacency
//! matrix is the weight of the edge `i -> j`.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge probability {p} exceeds 1 (expected_edges {expected_edges} too large for d={d})")]
    EdgeProbabilityTooLarge { p: f64, expected_edges: f64, d: usize },
    #[error("expected_edges must be positive, got {0}")]
    NonPositiveEdgeCount(f64),
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("self-loop ({0}, {0}) is not allowed")]
    SelfLoop(usize),
    #[error("edge ({i}, {j}) out of range for d={d}")]
    EdgeOutOfRange { i: usize, j: usize, d: usize },
    #[error("variance-normalized thresholding needs per-column data variances")]
    MissingVariances,
    #[error("column variance {value} at column {col} must be strictly positive")]
    NonPositiveVariance { col: usize, value: f64 },
    #[error("thresholding expects nonnegative entries, found {value} at ({i}, {j})")]
    NegativeEntry { i: usize, j: usize, value: f64 },
    #[error("threshold cutoff must be nonnegative, got {0}")]
    NegativeCutoff(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("edge set contains a directed cycle through {0:?}")]
    Cyclic(Vec<usize>),
}

/// A directed acyclic graph on `d` nodes; edges are ordered pairs
/// `(i, j)` meaning `i -> j`, 0-indexed, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryDag {
    pub d: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

impl BinaryDag {
    pub fn empty(d: usize) -> Self {
        Self { d, edges: BTreeSet::new() }
    }

    /// Builds a DAG from an edge list, rejecting self-loops, out-of-range
    /// nodes, and cycles.
    pub fn from_edges(d: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if i >= d || j >= d {
                return Err(GraphError::EdgeOutOfRange { i, j, d });
            }
            set.insert((i, j));
        }
        let g = Self { d, edges: set };
        match g.topological_order() {
            Ok(_) => Ok(g),
            Err(cycle) => Err(GraphError::Cyclic(cycle)),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(_, t)| t == j).map(|&(s, _)| s).collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(s, _)| s == i).map(|&(_, t)| t).collect()
    }

    /// Topological order of the nodes, or a cycle witness if the edge set
    /// (possibly built through serde, bypassing `from_edges`) is cyclic.
    pub fn topological_order(&self) -> Result<Vec<usize>, Vec<usize>> {
        topological_order_of(self.d, self.edges.iter().copied())
    }

    /// 0/1 adjacency matrix view of the edge set.
    pub fn to_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.d, self.d));
        for &(i, j) in &self.edges {
            m[(i, j)] = 1.0;
        }
        m
    }
}

/// Iterative DFS three-color topological sort; returns the order or a
/// cycle witness (the node sequence along the back edge).
fn topological_order_of(
    d: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> Result<Vec<usize>, Vec<usize>> {
    let mut adj = vec![Vec::new(); d];
    for (i, j) in edges {
        adj[i].push(j);
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    let mut color = vec![Color::White; d];
    let mut parent = vec![usize::MAX; d];
    let mut order = Vec::with_capacity(d);

    for start in 0..d {
        if color[start] != Color::White {
            continue;
        }
        // stack holds (node, next child index)
        let mut stack = vec![(start, 0usize)];
        color[start] = Color::Gray;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next < adj[u].len() {
                let v = adj[u][*next];
                *next += 1;
                match color[v] {
                    Color::White => {
                        color[v] = Color::Gray;
                        parent[v] = u;
                        stack.push((v, 0));
                    }
                    Color::Gray => {
                        // Back edge u -> v closes a cycle v -> ... -> u.
                        let mut cycle = vec![v];
                        let mut w = u;
                        while w != v {
                            cycle.push(w);
                            w = parent[w];
                        }
                        cycle[1..].reverse();
                        return Err(cycle);
                    }
                    Color::Black => {}
                }
            } else {
                color[u] = Color::Black;
                order.push(u);
                stack.pop();
            }
        }
    }
    order.reverse();
    Ok(order)
}

/// d×d matrix of edge weights; entry `(i, j)` is the weight of `i -> j`.
///
/// DCE and first-layer-norm adjacencies are nonnegative by construction;
/// ground-truth linear coefficient matrices are signed, and consumers
/// needing magnitudes take `abs()` explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAdjacency {
    pub values: Array2<f64>,
}

impl WeightedAdjacency {
    pub fn new(values: Array2<f64>) -> Self {
        assert_eq!(values.nrows(), values.ncols(), "adjacency must be square");
        Self { values }
    }

    pub fn zeros(d: usize) -> Self {
        Self { values: Array2::zeros((d, d)) }
    }

    pub fn d(&self) -> usize {
        self.values.nrows()
    }

    /// Entrywise absolute value.
    pub fn abs(&self) -> Self {
        Self { values: self.values.mapv(f64::abs) }
    }
}

/// How a weighted adjacency is cut down to a binary graph. The cutoff is
/// compared strictly (`value > C` keeps the edge), and the diagonal is
/// always dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "cutoff", rename_all = "snake_case")]
pub enum ThresholdScheme {
    /// Keep `(i, j)` iff `a_ij > C`.
    Raw(f64),
    /// Keep `(i, j)` iff `a_ij / var(x_j) > C`; needs data column variances.
    VarianceNormalized(f64),
    /// Keep `(i, j)` iff `a_ij / sum_k a_kj > C`; a zero column keeps no edges.
    ColumnSumNormalized(f64),
}

impl ThresholdScheme {
    pub fn cutoff(&self) -> f64 {
        match *self {
            ThresholdScheme::Raw(c)
            | ThresholdScheme::VarianceNormalized(c)
            | ThresholdScheme::ColumnSumNormalized(c) => c,
        }
    }
}

/// Samples an Erdős–Rényi DAG: a uniform random node permutation fixes an
/// order, and each of the d(d-1)/2 pairs pointing forward in that order is
/// included independently with probability `expected_edges / (d(d-1)/2)`.
pub fn sample_er_dag<R: Rng>(
    d: usize,
    expected_edges: f64,
    rng: &mut R,
) -> Result<BinaryDag, GraphError> {
    if d < 2 {
        return Err(GraphError::TooFewNodes(d));
    }
    if expected_edges <= 0.0 {
        return Err(GraphError::NonPositiveEdgeCount(expected_edges));
    }
    let pairs = (d * (d - 1) / 2) as f64;
    let p = expected_edges / pairs;
    if p > 1.0 {
        return Err(GraphError::EdgeProbabilityTooLarge { p, expected_edges, d });
    }

    // Fisher-Yates permutation.
    let mut perm: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }

    let mut edges = BTreeSet::new();
    for i in 0..d {
        for j in (i + 1)..d {
            if rng.gen::<f64>() < p {
                edges.insert((perm[i], perm[j]));
            }
        }
    }
    Ok(BinaryDag { d, edges })
}

/// True iff the support graph `{(i, j): |m_ij| > tol}` has no directed
/// cycle, by DFS. A diagonal entry above `tol` is a 1-cycle, so the
/// identity matrix is cyclic. Testing oracle; quadratic scans are fine.
pub fn is_acyclic_bruteforce(m: &Array2<f64>, tol: f64) -> bool {
    let d = m.nrows();
    assert_eq!(d, m.ncols());
    for i in 0..d {
        if m[(i, i)].abs() > tol {
            return false;
        }
    }
    let edges = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && m[(i, j)].abs() > tol);
    topological_order_of(d, edges).is_ok()
}

/// Every labeled DAG on `d` nodes, by filtering all edge subsets for
/// acyclicity. Exponential in d(d-1); meant for d <= 4 (3 nodes: 25 DAGs).
pub fn enumerate_all_dags(d: usize) -> Vec<BinaryDag> {
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j)
        .collect();
    let mut out = Vec::new();
    for mask in 0..(1u64 << pairs.len()) {
        let edges = pairs
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, &p)| p);
        let candidate = BinaryDag { d, edges: edges.collect() };
        if candidate.topological_order().is_ok() {
            out.push(candidate);
        }
    }
    out
}

/// Cuts a weighted adjacency down to a binary graph under `scheme`.
/// `data_column_variances` is required (and must be strictly positive)
/// for [`ThresholdScheme::VarianceNormalized`].
pub fn threshold(
    a: &WeightedAdjacency,
    scheme: ThresholdScheme,
    data_column_variances: Option<&[f64]>,
) -> Result<BinaryDag, GraphError> {
    let d = a.d();
    let c = scheme.cutoff();
    if c < 0.0 {
        return Err(GraphError::NegativeCutoff(c));
    }
    for ((i, j), &v) in a.values.indexed_iter() {
        if v < 0.0 {
            return Err(GraphError::NegativeEntry { i, j, value: v });
        }
    }

    let mut edges = BTreeSet::new();
    match scheme {
        ThresholdScheme::Raw(_) => {
            for ((i, j), &v) in a.values.indexed_iter() {
                if i != j && v > c {
                    edges.insert((i, j));
                }
            }
        }
        ThresholdScheme::VarianceNormalized(_) => {
            let vars = data_column_variances.ok_or(GraphError::MissingVariances)?;
            if vars.len() != d {
                return Err(GraphError::DimensionMismatch(format!(
                    "got {} variances for d={d}",
                    vars.len()
                )));
            }
            for (col, &v) in vars.iter().enumerate() {
                if v <= 0.0 {
                    return Err(GraphError::NonPositiveVariance { col, value: v });
                }
            }
            for ((i, j), &v) in a.values.indexed_iter() {
                if i != j && v / vars[j] > c {
                    edges.insert((i, j));
                }
            }
        }
        ThresholdScheme::ColumnSumNormalized(_) => {
            let col_sums: Vec<f64> = (0..d).map(|j| a.values.column(j).sum()).collect();
            for ((i, j), &v) in a.values.indexed_iter() {
                if i != j && col_sums[j] > 0.0 && v / col_sums[j] > c {
                    edges.insert((i, j));
                }
            }
        }
    }
    Ok(BinaryDag { d, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn er_with_p_one_gives_exactly_one_edge_on_two_nodes() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = sample_er_dag(2, 1.0, &mut rng).unwrap();
            assert_eq!(g.num_edges(), 1);
        }
    }

    #[test]
    fn er_mean_edge_count_matches_expectation() {
        // d=10, 20 expected edges: p = 20/45. Over 10,000 draws the mean
        // should land within 20 ± 0.5 (binomial CI is much tighter).
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut total = 0usize;
        let draws = 10_000;
        for _ in 0..draws {
            total += sample_er_dag(10, 20.0, &mut rng).unwrap().num_edges();
        }
        let mean = total as f64 / draws as f64;
        assert!((mean - 20.0).abs() < 0.5, "mean edge count {mean}");
    }

    #[test]
    fn er_samples_are_always_acyclic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let g = sample_er_dag(10, 20.0, &mut rng).unwrap();
            assert!(g.topological_order().is_ok());
        }
    }

    #[test]
    fn er_rejects_probability_above_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_er_dag(3, 4.0, &mut rng),
            Err(GraphError::EdgeProbabilityTooLarge { .. })
        ));
    }

    #[test]
    fn toposort_empty_graph_is_valid_permutation() {
        let g = BinaryDag::empty(3);
        let order = g.topological_order().unwrap();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn toposort_chain() {
        let g = BinaryDag::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.topological_order().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn toposort_reports_two_cycle() {
        let witness = topological_order_of(2, [(0, 1), (1, 0)]).unwrap_err();
        let mut sorted = witness.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1]);
    }

    #[test]
    fn bruteforce_acyclicity_cases() {
        let upper = array![[0.0, 0.5, 0.2], [0.0, 0.0, 0.9], [0.0, 0.0, 0.0]];
        assert!(is_acyclic_bruteforce(&upper, 1e-9));

        let two_cycle = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(!is_acyclic_bruteforce(&two_cycle, 1e-9));

        let identity: Array2<f64> = Array2::eye(3);
        assert!(!is_acyclic_bruteforce(&identity, 1e-9));
    }

    #[test]
    fn threshold_raw() {
        let zero = WeightedAdjacency::zeros(3);
        let g = threshold(&zero, ThresholdScheme::Raw(0.25), None).unwrap();
        assert_eq!(g.num_edges(), 0);

        let mut a = WeightedAdjacency::zeros(3);
        a.values[(0, 1)] = 0.3;
        let g = threshold(&a, ThresholdScheme::Raw(0.25), None).unwrap();
        assert_eq!(g.edges, BTreeSet::from([(0, 1)]));
    }

    #[test]
    fn threshold_column_sum_normalized() {
        // a_01 = 0.3, a_21 = 0.1; column sum at node 1 is 0.4, so the
        // normalized weights are 0.75 and 0.25 against a 0.5 cutoff.
        let mut a = WeightedAdjacency::zeros(3);
        a.values[(0, 1)] = 0.3;
        a.values[(2, 1)] = 0.1;
        let g = threshold(&a, ThresholdScheme::ColumnSumNormalized(0.5), None).unwrap();
        assert_eq!(g.edges, BTreeSet::from([(0, 1)]));
    }

    #[test]
    fn threshold_variance_normalized_requires_variances() {
        let a = WeightedAdjacency::zeros(2);
        assert!(matches!(
            threshold(&a, ThresholdScheme::VarianceNormalized(0.1), None),
            Err(GraphError::MissingVariances)
        ));
        assert!(matches!(
            threshold(&a, ThresholdScheme::VarianceNormalized(0.1), Some(&[1.0, 0.0])),
            Err(GraphError::NonPositiveVariance { col: 1, .. })
        ));
    }

    #[test]
    fn threshold_rejects_negative_entries() {
        let mut a = WeightedAdjacency::zeros(2);
        a.values[(0, 1)] = -0.5;
        assert!(matches!(
            threshold(&a, ThresholdScheme::Raw(0.1), None),
            Err(GraphError::NegativeEntry { .. })
        ));
    }

    #[test]
    fn threshold_at_zero_returns_full_support_minus_diagonal() {
        let mut a = WeightedAdjacency::zeros(3);
        a.values[(0, 1)] = 0.4;
        a.values[(1, 2)] = 1e-9;
        a.values[(2, 2)] = 5.0; // diagonal must be dropped
        let g = threshold(&a, ThresholdScheme::Raw(0.0), None).unwrap();
        assert_eq!(g.edges, BTreeSet::from([(0, 1), (1, 2)]));
    }

    #[test]
    fn ties_at_cutoff_are_excluded() {
        let mut a = WeightedAdjacency::zeros(2);
        a.values[(0, 1)] = 0.25;
        let g = threshold(&a, ThresholdScheme::Raw(0.25), None).unwrap();
        assert_eq!(g.num_edges(), 0);
    }
}
