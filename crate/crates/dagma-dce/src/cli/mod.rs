//! Command surface behind the `dagma-dce` binary: dataset generation,
//! fitting, evaluation, the benchmark harness, and the lemma
//! demonstrations. Everything here is a library function the binary (and
//! the tests) call directly.
//!
//! Exit-code contract: 0 success, 2 usage, 3 I/O or malformed files,
//! 4 solver/evaluation failure, 5 benchmark completed with failed trials.
//!
//! Every artifact is bit-reproducible given the same config and seed,
//! except recorded wall-clock measurements, which are confined to
//! `timing.json`, `timings.csv`, and the minutes panel of
//! `bench_boxes.svg` (see `docs/formats.md`).

pub mod bench;
pub mod config;
pub mod formats;
pub mod svg;

use crate::graphs::{self, ThresholdScheme, WeightedAdjacency};
use crate::lemmas;
use crate::metrics::{self, MetricsReport};
use crate::models::{Activation, DifferentiableSemModel, LinearSemModel, MlpSemModel};
use crate::solver::{self, DiscoveryResult, SolverError};
use crate::synthdata::{self, Mechanism, NoiseSpec, SemSpec};
use config::{FitConfig, GenConfig, MechanismKind, Method};
use formats::FormatError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] FormatError),
    #[error("solver failed: {0}")]
    Solver(#[from] SolverError),
    #[error("evaluation failed: {0}")]
    Eval(String),
    #[error("{failed} of {total} benchmark trials failed (see failures.json)")]
    PartialBench { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Solver(_) | CliError::Eval(_) => 4,
            CliError::PartialBench { .. } => 5,
        }
    }
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(FormatError::io(path, e)))
}

/// Files produced by `gen`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenOutputs {
    pub dataset: PathBuf,
    pub sem: PathBuf,
    pub truth: PathBuf,
    pub weighted_truth: Option<PathBuf>,
}

/// Generates a dataset: ER DAG, mechanism, simulation, and the three
/// reproducibility artifacts (CSV data, SEM snapshot, truth graph).
pub fn run_gen(config: &GenConfig, out: &Path) -> Result<GenOutputs, CliError> {
    if config.d < 2 {
        return Err(CliError::Usage(format!("d must be >= 2, got {}", config.d)));
    }
    if config.n_samples == 0 {
        return Err(CliError::Usage("n_samples must be >= 1".into()));
    }
    ensure_dir(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let graph = graphs::sample_er_dag(config.d, config.expected_edges, &mut rng)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let sem = match config.mechanism {
        MechanismKind::Linear => {
            let mut sem =
                synthdata::sample_linear_sem(&graph, config.coef_low, config.coef_high, &mut rng)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
            sem.noise = NoiseSpec::Gaussian { sigma: config.noise_sigma };
            sem
        }
        MechanismKind::Gp => SemSpec {
            graph: graph.clone(),
            mechanism: Mechanism::GpAdditive { lengthscale: config.lengthscale },
            noise: NoiseSpec::Gaussian { sigma: config.noise_sigma },
        },
        MechanismKind::Mlp => {
            let mut sem = synthdata::sample_random_mlp_sem(&graph, config.sem_hidden, &mut rng)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            sem.noise = NoiseSpec::Gaussian { sigma: config.noise_sigma };
            sem
        }
    };
    let mut data = synthdata::simulate(&sem, config.n_samples, &mut rng)
        .map_err(|e| CliError::Eval(e.to_string()))?;
    if config.standardize {
        data.standardize();
    }

    let dataset = out.join("dataset.csv");
    let sem_path = out.join("sem.json");
    let truth = out.join("truth.json");
    formats::write_dataset_csv(&dataset, &data.x)?;

    #[derive(Serialize)]
    struct SemSnapshot<'a> {
        schema_version: u32,
        seed: u64,
        config: &'a GenConfig,
        sem_hash: u64,
        sem: &'a SemSpec,
    }
    formats::write_json(
        &sem_path,
        &SemSnapshot {
            schema_version: config::SCHEMA_VERSION,
            seed: config.seed,
            config,
            sem_hash: sem.canonical_hash(),
            sem: &sem,
        },
    )?;
    formats::write_binary_graph(&truth, &sem.graph)?;

    let weighted_truth = match &sem.mechanism {
        Mechanism::Linear { coefficients } => {
            let path = out.join("truth_weights.json");
            formats::write_weighted_adjacency(
                &path,
                &WeightedAdjacency::new(coefficients.clone()),
            )?;
            Some(path)
        }
        _ => None,
    };
    Ok(GenOutputs { dataset, sem: sem_path, truth, weighted_truth })
}

/// Summary written as `result.json` by `fit`.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub schema_version: u32,
    pub method: Method,
    pub config: FitConfig,
    pub seed: u64,
    pub d: usize,
    pub n_samples: usize,
    pub accepted_iters: usize,
    pub feasibility_incidents: usize,
    pub final_score: crate::objective::ScoreBreakdown,
}

/// Files produced by `fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutputs {
    pub result: PathBuf,
    pub adjacency: PathBuf,
    pub dce_adjacency: PathBuf,
    pub trace: PathBuf,
    pub checkpoint: PathBuf,
    pub timing: PathBuf,
}

/// Fits one method to a dataset on disk and writes the result artifacts.
pub fn run_fit(
    data_path: &Path,
    fit_config: &FitConfig,
    seed: u64,
    out: &Path,
) -> Result<(FitOutputs, DiscoveryResult), CliError> {
    ensure_dir(out)?;
    let mut x = formats::read_dataset_csv(data_path)?;
    if fit_config.standardize {
        let mut data = synthdata::Dataset { x, provenance: None };
        data.standardize();
        x = data.x;
    }
    let d = x.ncols();
    let config = fit_config.clone().resolved();
    let mut solver_config = config.solver();
    solver_config.seed = seed;

    let result = match config.method {
        Method::LinearDce => {
            let mut model = LinearSemModel::zeros(d);
            solver::fit_dagma_dce(&x, &mut model, &solver_config)?
        }
        Method::DagmaDce => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = MlpSemModel::random_init(
                d,
                config.hidden.clone(),
                Activation::Sigmoid,
                true,
                &mut rng,
            );
            solver::fit_dagma_dce(&x, &mut model, &solver_config)?
        }
        Method::Dagma => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = MlpSemModel::random_init(
                d,
                config.hidden.clone(),
                Activation::Sigmoid,
                true,
                &mut rng,
            );
            solver::fit_dagma_baseline(&x, &mut model, &solver_config)?
        }
    };

    let outputs = FitOutputs {
        result: out.join("result.json"),
        adjacency: out.join("adjacency.json"),
        dce_adjacency: out.join("dce_adjacency.json"),
        trace: out.join("trace.jsonl"),
        checkpoint: out.join("checkpoint.json"),
        timing: out.join("timing.json"),
    };
    let final_score = result
        .trace
        .last()
        .map(|r| r.score)
        .unwrap_or(crate::objective::ScoreBreakdown {
            mse: f64::NAN,
            l1_dce: f64::NAN,
            h_value: f64::NAN,
            mu: solver_config.mu_init,
            total: f64::NAN,
        });
    let mut result_config = config.clone();
    result_config.solver = Some(solver_config.clone());
    formats::write_json(
        &outputs.result,
        &FitSummary {
            schema_version: config::SCHEMA_VERSION,
            method: config.method,
            config: result_config,
            seed,
            d,
            n_samples: x.nrows(),
            accepted_iters: result.accepted_iters,
            feasibility_incidents: result.feasibility_incidents,
            final_score,
        },
    )?;
    formats::write_weighted_adjacency(&outputs.adjacency, &result.adjacency)?;
    formats::write_weighted_adjacency(&outputs.dce_adjacency, &result.dce_adjacency)?;
    formats::write_trace_jsonl(&outputs.trace, &result.trace)?;
    formats::write_json(&outputs.checkpoint, &result.checkpoint)?;

    #[derive(Serialize)]
    struct Timing {
        wall_time_s: f64,
    }
    formats::write_json(&outputs.timing, &Timing { wall_time_s: result.wall_time_s })?;
    Ok((outputs, result))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Raw,
    Var,
    Colsum,
}

impl SchemeKind {
    pub fn parse(s: &str) -> Option<SchemeKind> {
        match s {
            "raw" => Some(SchemeKind::Raw),
            "var" => Some(SchemeKind::Var),
            "colsum" => Some(SchemeKind::Colsum),
            _ => None,
        }
    }
}

pub struct EvalArgs<'a> {
    pub result_path: &'a Path,
    pub truth_path: &'a Path,
    pub scheme: SchemeKind,
    pub cutoff: f64,
    /// Dataset backing the variance-normalized scheme.
    pub data_path: Option<&'a Path>,
    /// Weighted ground truth (signed allowed; compared by magnitude).
    pub weighted_truth: Option<&'a Path>,
    /// Second weighted adjacency for rank correlations.
    pub compare: Option<&'a Path>,
}

/// Thresholds a fitted weighted adjacency and scores it against the true
/// graph; writes `metrics.json` and `metrics.csv`.
pub fn run_eval(args: &EvalArgs, out: &Path) -> Result<MetricsReport, CliError> {
    ensure_dir(out)?;
    let adjacency = formats::read_weighted_adjacency(args.result_path)?;
    let truth = formats::read_binary_graph(args.truth_path)?;

    let scheme = match args.scheme {
        SchemeKind::Raw => ThresholdScheme::Raw(args.cutoff),
        SchemeKind::Var => ThresholdScheme::VarianceNormalized(args.cutoff),
        SchemeKind::Colsum => ThresholdScheme::ColumnSumNormalized(args.cutoff),
    };
    let variances = match args.scheme {
        SchemeKind::Var => {
            let data_path = args.data_path.ok_or_else(|| {
                CliError::Usage("--scheme var needs --data pointing at the dataset".into())
            })?;
            let x = formats::read_dataset_csv(data_path)?;
            Some(synthdata::Dataset { x, provenance: None }.column_variances())
        }
        _ => None,
    };
    let est = graphs::threshold(&adjacency, scheme, variances.as_deref())
        .map_err(|e| CliError::Eval(e.to_string()))?;

    let shd = metrics::shd(&est, &truth).map_err(|e| CliError::Eval(e.to_string()))?;
    let (precision, recall, f1) =
        metrics::precision_recall_f1(&est, &truth).map_err(|e| CliError::Eval(e.to_string()))?;
    let sid = metrics::sid(&est, &truth).map_err(|e| CliError::Eval(e.to_string()))?;

    let frobenius_to_truth = match args.weighted_truth {
        Some(path) => {
            let wt = formats::read_weighted_adjacency(path)?;
            Some(
                metrics::frobenius_diff(&adjacency, &wt.abs())
                    .map_err(|e| CliError::Eval(e.to_string()))?,
            )
        }
        None => None,
    };
    let (kendall_tau_b, spearman_rho) = match args.compare {
        Some(path) => {
            let other = formats::read_weighted_adjacency(path)?;
            (
                metrics::kendall_tau_b(&adjacency, &other).ok(),
                metrics::spearman_rho(&adjacency, &other).ok(),
            )
        }
        None => (None, None),
    };

    let report = MetricsReport {
        shd,
        precision,
        recall,
        f1,
        fm_index: metrics::fowlkes_mallows(precision, recall),
        sid,
        frobenius_to_truth,
        kendall_tau_b,
        spearman_rho,
        wall_time_s: None,
    };
    formats::write_json(&out.join("metrics.json"), &report)?;
    let csv = format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row());
    let csv_path = out.join("metrics.csv");
    std::fs::write(&csv_path, csv).map_err(|e| CliError::Io(FormatError::io(&csv_path, e)))?;
    Ok(report)
}

/// Witness report written by `lemma`.
#[derive(Debug, Serialize, Deserialize)]
pub struct LemmaReport {
    pub schema_version: u32,
    pub lemma1: lemmas::Lemma1Witness,
    pub lemma2: Lemma2Report,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Lemma2Report {
    pub s_grid: Vec<f64>,
    pub first_layer_norms: Vec<f64>,
    pub max_output_deviation: f64,
    pub max_dce_deviation: f64,
}

/// Runs both demonstrations and writes `lemma.json`: the tiny-first-layer
/// witness and the ReLU rescaling sweep with its invariance checks.
pub fn run_lemma(eps: f64, delta: f64, s_grid: &[f64], out: &Path) -> Result<LemmaReport, CliError> {
    if eps <= 0.0 || delta < 0.0 || s_grid.iter().any(|&s| s <= 0.0) {
        return Err(CliError::Usage(
            "need eps > 0, delta >= 0, and a positive s grid".into(),
        ));
    }
    ensure_dir(out)?;
    let lemma1 = lemmas::lemma1_witness(eps, delta, 0, 3, 10);

    let model = lemmas::random_relu_mlp(3, 8, 17);
    let x = lemmas::witness_inputs(3);
    let reference_out = model.forward(&x).map_err(|e| CliError::Eval(e.to_string()))?;
    let reference_adj = crate::objective::dce_adjacency(
        &model.jacobian_batch(&x).map_err(|e| CliError::Eval(e.to_string()))?,
    );
    let mut norms = Vec::new();
    let mut max_out_dev = 0.0_f64;
    let mut max_dce_dev = 0.0_f64;
    for &s in s_grid {
        let rescaled =
            lemmas::rescale_relu_mlp(&model, 1, 0, s).map_err(|e| CliError::Eval(e.to_string()))?;
        norms.push(rescaled.first_layer_norms().values[(0, 1)]);
        let out_now = rescaled.forward(&x).map_err(|e| CliError::Eval(e.to_string()))?;
        for (a, b) in reference_out.iter().zip(out_now.iter()) {
            max_out_dev = max_out_dev.max((a - b).abs());
        }
        let adj = crate::objective::dce_adjacency(
            &rescaled.jacobian_batch(&x).map_err(|e| CliError::Eval(e.to_string()))?,
        );
        for (a, b) in reference_adj.values.iter().zip(adj.values.iter()) {
            max_dce_dev = max_dce_dev.max((a - b).abs());
        }
    }
    let report = LemmaReport {
        schema_version: config::SCHEMA_VERSION,
        lemma1,
        lemma2: Lemma2Report {
            s_grid: s_grid.to_vec(),
            first_layer_norms: norms,
            max_output_deviation: max_out_dev,
            max_dce_deviation: max_dce_dev,
        },
    };
    formats::write_json(&out.join("lemma.json"), &report)?;
    Ok(report)
}

/// Runs a benchmark suite; maps partial failure onto the dedicated exit
/// status while still writing everything that succeeded.
pub fn run_bench(suite: &config::BenchSuite, out: &Path) -> Result<bench::BenchOutcome, CliError> {
    if suite.d_list.is_empty() || suite.trials == 0 || suite.methods.is_empty() {
        return Err(CliError::Usage(
            "bench suite needs at least one d, one trial, and one method".into(),
        ));
    }
    let outcome = bench::run_suite(suite, out)?;
    if !outcome.failures.is_empty() {
        let total = suite.d_list.len() * suite.trials * suite.methods.len();
        return Err(CliError::PartialBench { failed: outcome.failures.len(), total });
    }
    Ok(outcome)
}
