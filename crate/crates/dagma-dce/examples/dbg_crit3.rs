// temporary probe for the linear interpretability experiment
use dagma_dce::cli::config::derive_seed;
use dagma_dce::graphs::{sample_er_dag, threshold, ThresholdScheme, WeightedAdjacency};
use dagma_dce::metrics;
use dagma_dce::models::{Activation, MlpSemModel};
use dagma_dce::solver::{fit_dagma_baseline, fit_dagma_dce, CentralPathConfig};
use dagma_dce::synthdata::{sample_linear_sem, simulate_seeded, Mechanism};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let run_baseline = args.get(2).map(|s| s == "baseline").unwrap_or(false);

    let data_seed = derive_seed(1000, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    let graph = sample_er_dag(10, 20.0, &mut rng).unwrap();
    let sem = sample_linear_sem(&graph, 0.5, 2.0, &mut rng).unwrap();
    let data = simulate_seeded(&sem, 1000, derive_seed(data_seed, 1)).unwrap();
    let Mechanism::Linear { coefficients } = &sem.mechanism else { unreachable!() };
    let abs_b = WeightedAdjacency::new(coefficients.mapv(f64::abs));

    let t0 = Instant::now();
    let mut model_rng = ChaCha8Rng::seed_from_u64(derive_seed(data_seed, 2));
    let mut model = MlpSemModel::random_init(10, vec![10], Activation::Sigmoid, true, &mut model_rng);

    let pretrain_iters: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(7000);
    let stage_iters: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(700);
    let lr: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(2e-4);

    let result = if run_baseline {
        let config = CentralPathConfig {
            seed: data_seed,
            max_iters_per_stage: pretrain_iters,
            lr,
            ..CentralPathConfig::default_baseline()
        };
        fit_dagma_baseline(&data.x, &mut model, &config).unwrap()
    } else {
        let config = CentralPathConfig {
            lambda1: 0.0,
            seed: data_seed,
            pretrain_iters,
            max_iters_per_stage: stage_iters,
            lr,
            ..CentralPathConfig::default_dce()
        };
        fit_dagma_dce(&data.x, &mut model, &config).unwrap()
    };
    let wall = t0.elapsed().as_secs_f64();
    let last = result.trace.last().unwrap();
    println!(
        "  final: mse {:.4} l1 {:.4} h {:.3e} mu {:.1e}",
        last.score.mse, last.score.l1_dce, last.score.h_value, last.score.mu
    );
    // largest off-support entries and smallest on-support entries
    let mut spurious: Vec<(f64, usize, usize)> = Vec::new();
    let mut on_support: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..10 {
        for j in 0..10 {
            if i == j { continue; }
            let v = result.adjacency.values[(i, j)];
            if graph.has_edge(i, j) {
                on_support.push((v, i, j));
            } else {
                spurious.push((v, i, j));
            }
        }
    }
    spurious.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    on_support.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    println!("  worst spurious: {:?}", &spurious[..4.min(spurious.len())]);
    for &(v, i, j) in spurious.iter().take(4) {
        println!("    ({i},{j})={v:.3}: reverse_true={} b_ji={:.3}", graph.has_edge(j, i), coefficients[(j, i)]);
    }
    println!("  weakest true:   {:?}", &on_support[..4.min(on_support.len())]);

    let est = threshold(&result.adjacency, ThresholdScheme::Raw(0.25), None).unwrap();
    let shd = metrics::shd(&est, &graph).unwrap();
    let frob = metrics::frobenius_diff(&result.adjacency, &abs_b).unwrap();
    let frob_rel = frob / metrics::frobenius_diff(&abs_b, &WeightedAdjacency::zeros(10)).unwrap();
    println!(
        "seed {seed} method {} | shd {shd} | rel_frob {frob_rel:.4} | iters {} | incidents {} | {wall:.1}s | edges true {} est {}",
        if run_baseline { "baseline" } else { "dce" },
        result.accepted_iters,
        result.feasibility_incidents,
        graph.num_edges(),
        est.num_edges()
    );
}
