//! Benchmark harness: generates one dataset per (d, trial), fits every
//! requested method on the same data, evaluates against the true graph,
//! and aggregates box statistics, rank correlations between methods'
//! weighted adjacencies, and timing.
//!
//! Trials run in parallel; every trial derives its own seed from the
//! suite seed and trial index, so results are independent of scheduling.
//! Failed trials are recorded and aggregation proceeds over successes.

use super::config::{derive_seed, BenchSuite, MechanismKind, Method};
use super::formats;
use super::svg::{self, BoxStats, Panel, Series};
use crate::graphs::{self, BinaryDag, ThresholdScheme, WeightedAdjacency};
use crate::metrics::{self, MetricsReport};
use crate::models::{Activation, LinearSemModel, MlpSemModel};
use crate::solver::{self, DiscoveryResult};
use crate::synthdata::{self, Mechanism, NoiseSpec, SemSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub d: usize,
    pub mechanism: String,
    pub method: String,
    pub trial: usize,
    pub data_seed: u64,
    pub fit_seed: u64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialFailure {
    pub d: usize,
    pub method: String,
    pub trial: usize,
    pub error: String,
}

/// Mean ± std summary of one rank-correlation statistic across trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub statistic: String,
    pub mean: f64,
    pub std: f64,
    pub formatted: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankCorrelationReport {
    pub method_a: String,
    pub method_b: String,
    pub d: usize,
    pub kendall_tau_b: CorrelationSummary,
    pub spearman_rho: CorrelationSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub d: usize,
    pub method: String,
    pub metric: String,
    pub stats: BoxStats,
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
}

struct TrialResult {
    record: TrialRecord,
    /// Method's own adjacency notion, for rank correlations and heatmaps.
    adjacency: WeightedAdjacency,
    wall_time_s: f64,
    /// |B| when the mechanism is linear.
    weighted_truth: Option<WeightedAdjacency>,
}

fn generate_sem(suite: &BenchSuite, d: usize, rng: &mut ChaCha8Rng) -> Result<SemSpec, String> {
    let expected_edges = suite.edges_per_node * d as f64;
    let graph = graphs::sample_er_dag(d, expected_edges, rng).map_err(|e| e.to_string())?;
    let mut sem = match suite.mechanism {
        MechanismKind::Linear => {
            synthdata::sample_linear_sem(&graph, suite.coef_low, suite.coef_high, rng)
                .map_err(|e| e.to_string())?
        }
        MechanismKind::Gp => SemSpec {
            graph,
            mechanism: Mechanism::GpAdditive { lengthscale: suite.lengthscale },
            noise: NoiseSpec::Gaussian { sigma: suite.noise_sigma },
        },
        MechanismKind::Mlp => synthdata::sample_random_mlp_sem(&graph, suite.sem_hidden, rng)
            .map_err(|e| e.to_string())?,
    };
    sem.noise = NoiseSpec::Gaussian { sigma: suite.noise_sigma };
    Ok(sem)
}

fn fit_one(
    suite: &BenchSuite,
    method: Method,
    x: &ndarray::Array2<f64>,
    fit_seed: u64,
) -> Result<DiscoveryResult, String> {
    let d = x.ncols();
    let mut config = suite.solver_for(method);
    config.seed = fit_seed;
    match method {
        Method::LinearDce => {
            let mut model = LinearSemModel::zeros(d);
            solver::fit_dagma_dce(x, &mut model, &config).map_err(|e| e.to_string())
        }
        Method::DagmaDce => {
            let mut rng = ChaCha8Rng::seed_from_u64(fit_seed);
            let mut model = MlpSemModel::random_init(
                d,
                suite.model_hidden.clone(),
                Activation::Sigmoid,
                true,
                &mut rng,
            );
            solver::fit_dagma_dce(x, &mut model, &config).map_err(|e| e.to_string())
        }
        Method::Dagma => {
            let mut rng = ChaCha8Rng::seed_from_u64(fit_seed);
            let mut model = MlpSemModel::random_init(
                d,
                suite.model_hidden.clone(),
                Activation::Sigmoid,
                true,
                &mut rng,
            );
            solver::fit_dagma_baseline(x, &mut model, &config).map_err(|e| e.to_string())
        }
    }
}

/// Thresholds, compares to the truth, and assembles one metrics report.
pub fn evaluate_fit(
    adjacency: &WeightedAdjacency,
    truth: &BinaryDag,
    threshold: f64,
    weighted_truth: Option<&WeightedAdjacency>,
) -> Result<MetricsReport, String> {
    let est = graphs::threshold(adjacency, ThresholdScheme::Raw(threshold), None)
        .map_err(|e| e.to_string())?;
    let shd = metrics::shd(&est, truth).map_err(|e| e.to_string())?;
    let (precision, recall, f1) =
        metrics::precision_recall_f1(&est, truth).map_err(|e| e.to_string())?;
    let sid = metrics::sid(&est, truth).map_err(|e| e.to_string())?;
    let frobenius_to_truth = match weighted_truth {
        Some(wt) => Some(
            metrics::frobenius_diff(adjacency, &wt.abs()).map_err(|e| e.to_string())?,
        ),
        None => None,
    };
    Ok(MetricsReport {
        shd,
        precision,
        recall,
        f1,
        fm_index: metrics::fowlkes_mallows(precision, recall),
        sid,
        frobenius_to_truth,
        kendall_tau_b: None,
        spearman_rho: None,
        wall_time_s: None,
    })
}

fn run_trial(
    suite: &BenchSuite,
    d: usize,
    trial: usize,
    job_index: u64,
) -> Vec<Result<TrialResult, TrialFailure>> {
    let data_seed = derive_seed(suite.seed, job_index);
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    let sem = match generate_sem(suite, d, &mut rng) {
        Ok(s) => s,
        Err(e) => {
            return suite
                .methods
                .iter()
                .map(|m| {
                    Err(TrialFailure {
                        d,
                        method: m.name().to_string(),
                        trial,
                        error: format!("data generation failed: {e}"),
                    })
                })
                .collect()
        }
    };
    let mut data = match synthdata::simulate(&sem, suite.n_samples, &mut rng) {
        Ok(x) => x,
        Err(e) => {
            return suite
                .methods
                .iter()
                .map(|m| {
                    Err(TrialFailure {
                        d,
                        method: m.name().to_string(),
                        trial,
                        error: format!("simulation failed: {e}"),
                    })
                })
                .collect()
        }
    };
    if suite.standardize {
        data.standardize();
    }
    let weighted_truth = match &sem.mechanism {
        Mechanism::Linear { coefficients } => {
            Some(WeightedAdjacency::new(coefficients.clone()))
        }
        _ => None,
    };

    suite
        .methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let fit_seed = derive_seed(data_seed, 1000 + mi as u64);
            let result = fit_one(suite, method, &data.x, fit_seed).map_err(|error| TrialFailure {
                d,
                method: method.name().to_string(),
                trial,
                error,
            })?;
            let mut metrics_report =
                evaluate_fit(&result.adjacency, &sem.graph, suite.threshold, weighted_truth.as_ref())
                    .map_err(|error| TrialFailure {
                        d,
                        method: method.name().to_string(),
                        trial,
                        error,
                    })?;
            metrics_report.wall_time_s = Some(result.wall_time_s);
            Ok(TrialResult {
                record: TrialRecord {
                    d,
                    mechanism: suite.mechanism.name().to_string(),
                    method: method.name().to_string(),
                    trial,
                    data_seed,
                    fit_seed,
                    metrics: metrics_report,
                },
                adjacency: result.adjacency,
                wall_time_s: result.wall_time_s,
                weighted_truth: weighted_truth.clone(),
            })
        })
        .collect()
}

fn percentile_stats(values: &[f64]) -> Option<BoxStats> {
    BoxStats::from_samples(values)
}

fn summarize(values: Vec<f64>, statistic: &str) -> CorrelationSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n.max(1.0);
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    CorrelationSummary {
        statistic: statistic.to_string(),
        mean,
        std,
        formatted: format!("{mean:.2} ± {std:.2}"),
        values,
    }
}

/// Runs the whole suite and writes every artifact into `out`.
/// Returns the outcome so the caller can decide the exit status.
pub fn run_suite(suite: &BenchSuite, out: &Path) -> Result<BenchOutcome, formats::FormatError> {
    std::fs::create_dir_all(out).map_err(|e| formats::FormatError::io(out, e))?;
    let suite = suite.clone().resolved();

    let jobs: Vec<(usize, usize, u64)> = suite
        .d_list
        .iter()
        .flat_map(|&d| (0..suite.trials).map(move |t| (d, t)))
        .enumerate()
        .map(|(k, (d, t))| (d, t, k as u64))
        .collect();

    let per_trial: Vec<Vec<Result<TrialResult, TrialFailure>>> = jobs
        .par_iter()
        .map(|&(d, trial, job_index)| run_trial(&suite, d, trial, job_index))
        .collect();

    let mut results: Vec<TrialResult> = Vec::new();
    let mut failures: Vec<TrialFailure> = Vec::new();
    // Rank correlations pair the first two methods' adjacencies per trial.
    let mut correlation_pairs: Vec<(usize, WeightedAdjacency, WeightedAdjacency)> = Vec::new();

    for trial_results in per_trial {
        let mut by_method: Vec<Option<&TrialResult>> = vec![None; suite.methods.len()];
        for (mi, r) in trial_results.iter().enumerate() {
            match r {
                Ok(res) => by_method[mi] = Some(res),
                Err(f) => failures.push(f.clone()),
            }
        }
        if suite.methods.len() >= 2 {
            if let (Some(a), Some(b)) = (by_method[0], by_method[1]) {
                correlation_pairs.push((a.record.d, a.adjacency.clone(), b.adjacency.clone()));
            }
        }
        for r in trial_results.iter().flatten() {
            results.push(TrialResult {
                record: r.record.clone(),
                adjacency: r.adjacency.clone(),
                wall_time_s: r.wall_time_s,
                weighted_truth: r.weighted_truth.clone(),
            });
        }
    }

    write_trials_csv(&out.join("trials.csv"), &results)?;
    write_timings_csv(&out.join("timings.csv"), &results)?;

    // Aggregate box statistics per (d, method, metric); timing aggregates
    // live in their own file since wall time is a measurement.
    let metric_names = ["sid", "shd", "f1", "precision", "recall", "fm_index"];
    let mut aggregate: Vec<AggregateRow> = Vec::new();
    let mut timing_aggregate: Vec<AggregateRow> = Vec::new();
    for &d in &suite.d_list {
        for method in &suite.methods {
            let rows: Vec<&TrialResult> = results
                .iter()
                .filter(|r| r.record.d == d && r.record.method == method.name())
                .collect();
            if rows.is_empty() {
                continue;
            }
            for metric in metric_names {
                let values: Vec<f64> = rows
                    .iter()
                    .map(|r| match metric {
                        "sid" => r.record.metrics.sid as f64,
                        "shd" => r.record.metrics.shd as f64,
                        "f1" => r.record.metrics.f1,
                        "precision" => r.record.metrics.precision,
                        "recall" => r.record.metrics.recall,
                        "fm_index" => r.record.metrics.fm_index,
                        _ => unreachable!(),
                    })
                    .collect();
                if let Some(stats) = percentile_stats(&values) {
                    aggregate.push(AggregateRow {
                        d,
                        method: method.name().to_string(),
                        metric: metric.to_string(),
                        stats,
                    });
                }
            }
            let minutes: Vec<f64> = rows.iter().map(|r| r.wall_time_s / 60.0).collect();
            if let Some(stats) = percentile_stats(&minutes) {
                timing_aggregate.push(AggregateRow {
                    d,
                    method: method.name().to_string(),
                    metric: "minutes".to_string(),
                    stats,
                });
            }
        }
    }
    formats::write_json(&out.join("aggregate.json"), &aggregate)?;
    formats::write_json(&out.join("timing.json"), &timing_aggregate)?;

    // Table-style rank correlations between the first two methods.
    if suite.methods.len() >= 2 {
        let mut reports = Vec::new();
        for &d in &suite.d_list {
            let mut taus = Vec::new();
            let mut rhos = Vec::new();
            for (pd, a, b) in &correlation_pairs {
                if *pd != d {
                    continue;
                }
                if let Ok(t) = metrics::kendall_tau_b(a, b) {
                    taus.push(t);
                }
                if let Ok(r) = metrics::spearman_rho(a, b) {
                    rhos.push(r);
                }
            }
            if taus.is_empty() && rhos.is_empty() {
                continue;
            }
            reports.push(RankCorrelationReport {
                method_a: suite.methods[0].name().to_string(),
                method_b: suite.methods[1].name().to_string(),
                d,
                kendall_tau_b: summarize(taus, "kendall_tau_b"),
                spearman_rho: summarize(rhos, "spearman_rho"),
            });
        }
        formats::write_json(&out.join("rank_correlation.json"), &reports)?;
    }

    write_box_figure(&out.join("bench_boxes.svg"), &suite, &aggregate, &timing_aggregate)?;

    // Difference heatmaps against |B| for linear suites (first trial of
    // each d, per method).
    for &d in &suite.d_list {
        for method in &suite.methods {
            if let Some(r) = results.iter().find(|r| {
                r.record.d == d && r.record.method == method.name() && r.record.trial == 0
            }) {
                if let Some(wt) = &r.weighted_truth {
                    let svg_text = svg::difference_heatmap(
                        &r.adjacency.values,
                        &wt.abs().values,
                        &format!("{} vs |B| (d={d}, trial 0)", method.name()),
                    );
                    let path = out.join(format!("heatmap_{}_d{d}.svg", method.name()));
                    std::fs::write(&path, svg_text)
                        .map_err(|e| formats::FormatError::io(&path, e))?;
                }
            }
        }
    }

    if !failures.is_empty() {
        formats::write_json(&out.join("failures.json"), &failures)?;
    }

    Ok(BenchOutcome { records: results.into_iter().map(|r| r.record).collect(), failures })
}

fn write_trials_csv(path: &Path, results: &[TrialResult]) -> Result<(), formats::FormatError> {
    let mut text = format!("d,mechanism,method,trial,data_seed,fit_seed,{}\n", MetricsReport::CSV_HEADER);
    for r in results {
        // Wall time is a measurement, kept out of this deterministic
        // file; see timings.csv.
        let mut m = r.record.metrics.clone();
        m.wall_time_s = None;
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.record.d,
            r.record.mechanism,
            r.record.method,
            r.record.trial,
            r.record.data_seed,
            r.record.fit_seed,
            m.csv_row()
        ));
    }
    std::fs::write(path, text).map_err(|e| formats::FormatError::io(path, e))
}

fn write_timings_csv(path: &Path, results: &[TrialResult]) -> Result<(), formats::FormatError> {
    let mut text = String::from("d,method,trial,wall_time_s\n");
    for r in results {
        text.push_str(&format!(
            "{},{},{},{}\n",
            r.record.d, r.record.method, r.record.trial, r.wall_time_s
        ));
    }
    std::fs::write(path, text).map_err(|e| formats::FormatError::io(path, e))
}

fn write_box_figure(
    path: &Path,
    suite: &BenchSuite,
    aggregate: &[AggregateRow],
    timing: &[AggregateRow],
) -> Result<(), formats::FormatError> {
    let group_labels: Vec<String> = suite.d_list.iter().map(|d| format!("d={d}")).collect();
    let panel_for = |metric: &str, rows: &[AggregateRow], title: &str| -> Panel {
        let series = suite
            .methods
            .iter()
            .map(|m| Series {
                label: m.name().to_string(),
                boxes: suite
                    .d_list
                    .iter()
                    .map(|&d| {
                        rows.iter()
                            .find(|r| r.d == d && r.method == m.name() && r.metric == metric)
                            .map(|r| r.stats)
                    })
                    .collect(),
            })
            .collect();
        Panel {
            title: title.to_string(),
            y_label: title.to_string(),
            group_labels: group_labels.clone(),
            series,
        }
    };
    let panels = [
        panel_for("sid", aggregate, "SID"),
        panel_for("shd", aggregate, "SHD"),
        panel_for("f1", aggregate, "F1"),
        panel_for("minutes", timing, "minutes"),
    ];
    let caption = format!(
        "{} mechanism, {} trials per d; boxes: median and quartiles, whiskers: min/max",
        suite.mechanism.name(),
        suite.trials
    );
    std::fs::write(path, svg::box_figure(&panels, &caption))
        .map_err(|e| formats::FormatError::io(path, e))
}
