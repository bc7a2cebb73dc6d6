// temporary hot-path profile
use dagma_dce::models::{Activation, DifferentiableSemModel, MlpSemModel};
use dagma_dce::objective;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (n, d, h) = (1000, 10, 10);
    let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-2.0..2.0));
    let mut model = MlpSemModel::zeros(d, vec![h], Activation::Sigmoid, true);
    let theta: Vec<f64> = (0..model.num_params()).map(|_| rng.gen_range(-0.2..0.2)).collect();
    model.set_params(&theta);

    let reps = 50;

    let t = Instant::now();
    for _ in 0..reps {
        let _ = model.forward(&x).unwrap();
    }
    println!("forward:         {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let t = Instant::now();
    for _ in 0..reps {
        let _ = model.grad_params_mse(&x);
    }
    println!("grad_params_mse: {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let t = Instant::now();
    for _ in 0..reps {
        let _ = model.jacobian_batch(&x).unwrap();
    }
    println!("jacobian_batch:  {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let jac = model.jacobian_batch(&x).unwrap();
    let adj = objective::dce_adjacency(&jac);
    let dA = Array2::from_shape_fn((d, d), |_| rng.gen_range(-1.0..1.0));

    let t = Instant::now();
    for _ in 0..reps {
        let _ = objective::dce_adjacency(&jac);
    }
    println!("dce_adjacency:   {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let t = Instant::now();
    for _ in 0..reps {
        let _ = objective::adjacency_cotangent(&adj, &jac, &dA);
    }
    println!("adj_cotangent:   {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let cot = objective::adjacency_cotangent(&adj, &jac, &dA);
    let t = Instant::now();
    for _ in 0..reps {
        let _ = model.vjp_jacobian_params(&x, &cot);
    }
    println!("vjp:             {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let t = Instant::now();
    for _ in 0..reps {
        let _ = objective::evaluate_objective(&model, &x, 0.035, 1.0, 1.0).unwrap();
    }
    println!("full objective:  {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);
}
