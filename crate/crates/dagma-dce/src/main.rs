use clap::{Args, Parser, Subcommand};
use dagma_dce::cli::{self, config, formats, CliError, EvalArgs, SchemeKind};
use std::path::PathBuf;
use std::process::ExitCode;

/// Differentiable causal discovery with interpretable causal strengths.
#[derive(Parser)]
#[command(name = "dagma-dce", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (falls back to the DCE_THREADS env var, then to
    /// the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CommonOut {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (ER DAG + SEM + simulation).
    Gen {
        /// Generation config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Standardize columns before writing.
        #[arg(long)]
        standardize: bool,
        #[command(flatten)]
        out: CommonOut,
    },
    /// Fit a causal structure to a dataset.
    Fit {
        /// Dataset CSV produced by `gen` (or matching its format).
        #[arg(long)]
        data: PathBuf,
        /// Fit config (JSON). Optional when --method is given.
        #[arg(long)]
        config: Option<PathBuf>,
        /// dagma-dce | dagma | linear-dce (overrides the config).
        #[arg(long)]
        method: Option<String>,
        /// Model-init / solver seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Standardize columns before fitting.
        #[arg(long)]
        standardize: bool,
        #[command(flatten)]
        out: CommonOut,
    },
    /// Threshold a fitted adjacency and score it against the truth.
    Eval {
        /// Weighted adjacency JSON from `fit`.
        #[arg(long)]
        result: PathBuf,
        /// True binary graph JSON.
        #[arg(long)]
        truth: PathBuf,
        /// Threshold cutoff.
        #[arg(long, default_value_t = 0.25)]
        threshold: f64,
        /// raw | var | colsum.
        #[arg(long, default_value = "raw")]
        scheme: String,
        /// Dataset CSV (required for --scheme var).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Weighted ground truth for Frobenius distance.
        #[arg(long)]
        weighted_truth: Option<PathBuf>,
        /// Second weighted adjacency for rank correlations.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[command(flatten)]
        out: CommonOut,
    },
    /// Run a benchmark suite (trials × methods × graph sizes).
    Bench {
        /// Suite config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the suite seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: CommonOut,
    },
    /// Emit the non-interpretability witnesses as JSON.
    Lemma {
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 10.0)]
        delta: f64,
        /// Comma-separated first-layer norms for the rescaling sweep.
        #[arg(long, default_value = "1e-3,1,1e3")]
        s_grid: String,
        #[command(flatten)]
        out: CommonOut,
    },
}

fn init_threads(threads: Option<usize>) {
    let n = threads.or_else(|| {
        std::env::var("DCE_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads);
    match cli.command {
        Command::Gen { config, seed, standardize, out } => {
            let mut gen_config: config::GenConfig = formats::read_json(&config)?;
            if let Some(seed) = seed {
                gen_config.seed = seed;
            }
            gen_config.standardize |= standardize;
            let outputs = cli::run_gen(&gen_config, &out.out)?;
            println!(
                "wrote {} ({} samples, d={}, {} mechanism)",
                outputs.dataset.display(),
                gen_config.n_samples,
                gen_config.d,
                gen_config.mechanism.name()
            );
            Ok(())
        }
        Command::Fit { data, config: config_path, method, seed, standardize, out } => {
            let mut fit_config: config::FitConfig = match (&config_path, &method) {
                (Some(path), _) => formats::read_json(path)?,
                (None, Some(m)) => {
                    let method = config::Method::parse(m)
                        .ok_or_else(|| CliError::Usage(format!("unknown method {m:?}")))?;
                    config::FitConfig::for_method(method)
                }
                (None, None) => {
                    return Err(CliError::Usage("fit needs --config or --method".into()))
                }
            };
            if let Some(m) = &method {
                fit_config.method = config::Method::parse(m)
                    .ok_or_else(|| CliError::Usage(format!("unknown method {m:?}")))?;
                if config_path.is_none() {
                    // keep the method-matched solver defaults
                    fit_config.solver = Some(fit_config.method.default_solver());
                }
            }
            fit_config.standardize |= standardize;
            let seed = seed.unwrap_or_else(|| fit_config.solver().seed);
            let (outputs, result) = cli::run_fit(&data, &fit_config, seed, &out.out)?;
            println!(
                "fit {} in {:.1}s ({} iters, {} feasibility incidents); adjacency at {}",
                fit_config.method.name(),
                result.wall_time_s,
                result.accepted_iters,
                result.feasibility_incidents,
                outputs.adjacency.display()
            );
            Ok(())
        }
        Command::Eval {
            result,
            truth,
            threshold,
            scheme,
            data,
            weighted_truth,
            compare,
            out,
        } => {
            let scheme = SchemeKind::parse(&scheme)
                .ok_or_else(|| CliError::Usage(format!("unknown scheme {scheme:?}")))?;
            let report = cli::run_eval(
                &EvalArgs {
                    result_path: &result,
                    truth_path: &truth,
                    scheme,
                    cutoff: threshold,
                    data_path: data.as_deref(),
                    weighted_truth: weighted_truth.as_deref(),
                    compare: compare.as_deref(),
                },
                &out.out,
            )?;
            println!(
                "shd={} sid={} f1={:.3} precision={:.3} recall={:.3}",
                report.shd, report.sid, report.f1, report.precision, report.recall
            );
            Ok(())
        }
        Command::Bench { config, seed, out } => {
            let mut suite: config::BenchSuite = formats::read_json(&config)?;
            if let Some(seed) = seed {
                suite.seed = seed;
            }
            let outcome = cli::run_bench(&suite, &out.out)?;
            println!("bench complete: {} trial records in {}", outcome.records.len(), out.out.display());
            Ok(())
        }
        Command::Lemma { eps, delta, s_grid, out } => {
            let grid: Result<Vec<f64>, _> =
                s_grid.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let grid =
                grid.map_err(|e| CliError::Usage(format!("bad --s-grid {s_grid:?}: {e}")))?;
            let report = cli::run_lemma(eps, delta, &grid, &out.out)?;
            println!(
                "lemma1: first_layer_norm={:.3e} dce_entry={:.3e}; lemma2 max deviations: outputs {:.2e}, dce {:.2e}",
                report.lemma1.first_layer_norm,
                report.lemma1.dce_entry,
                report.lemma2.max_output_deviation,
                report.lemma2.max_dce_deviation
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
