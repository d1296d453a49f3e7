//! Estimator variance: grows exponentially with the horizon for unstable
//! open-loop dynamics, scales as 1/N in the batch size, and stays flat under
//! a stabilizing feedback gain.
//!
//!     cargo run --release --example variance_scaling

use nalgebra::DVector;
use polgrad::estimator::batch_gradient;
use polgrad::dynamics::DynamicsModel;
use polgrad::policy::Policy;
use polgrad::reward::RewardFunction;
use polgrad::trainer::InitDist;

fn ensemble_variance(
    truth: &DynamicsModel,
    model: &DynamicsModel,
    gain: f64,
    horizon: usize,
    batch: usize,
    seeds: usize,
) -> f64 {
    let policy = if gain == 0.0 {
        Policy::open_loop(1, horizon)
    } else {
        Policy::scalar_tracking(gain, horizon)
    };
    let theta = DVector::zeros(horizon);
    let reward = RewardFunction::scalar_lq(0.5, horizon);
    let init = InitDist::UniformBox {
        lo: DVector::from_vec(vec![-1.0]),
        hi: DVector::from_vec(vec![1.0]),
    };
    let estimates: Vec<DVector<f64>> = (0..seeds)
        .map(|s| {
            batch_gradient(truth, model, &policy, &theta, &reward, horizon, &init, batch, 5000 + s as u64)
                .unwrap()
                .g
        })
        .collect();
    let mean = estimates.iter().fold(DVector::zeros(horizon), |acc, g| acc + g) / seeds as f64;
    estimates.iter().map(|g| (g - &mean).norm_squared()).sum::<f64>() / (seeds as f64 - 1.0)
}

fn main() {
    let truth = DynamicsModel::ScalarLinear { a: 1.2, b: 1.0 };
    let model = DynamicsModel::ScalarLinear { a: 1.3, b: 1.0 };
    let seeds = 64;

    println!("variance vs horizon (N = 1, 64 seeds):");
    println!("   T    open loop        feedback k=0.7");
    for horizon in [5usize, 10, 15, 20, 25, 30] {
        let open = ensemble_variance(&truth, &model, 0.0, horizon, 1, seeds);
        let fb = ensemble_variance(&truth, &model, 0.7, horizon, 1, seeds);
        println!("{horizon:4}    {open:12.6e}    {fb:12.6e}");
    }

    println!("\nN * variance vs batch size (T = 10, unstable pair):");
    for batch in [1usize, 4, 16, 64] {
        let var = ensemble_variance(&truth, &model, 0.0, 10, batch, seeds);
        println!("  N = {batch:3}: N*Var = {:.6e}", batch as f64 * var);
    }
}
