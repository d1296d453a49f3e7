//! Gradient ascent with an exact model on the concave scalar regulation
//! objective: the evaluation reward is non-decreasing at every iteration.
//!
//!     cargo run --release --example train_scalar

use nalgebra::DVector;
use polgrad::dynamics::DynamicsModel;
use polgrad::policy::Policy;
use polgrad::reward::RewardFunction;
use polgrad::trainer::{train, InitDist, TrainParams};

fn main() {
    let m = DynamicsModel::ScalarLinear { a: 0.9, b: 1.0 };
    let horizon = 10;
    let policy = Policy::open_loop(1, horizon);
    let reward = RewardFunction::setpoint(
        DVector::from_vec(vec![0.5]),
        DVector::from_vec(vec![1.0]),
        horizon,
    );
    let params = TrainParams {
        horizon,
        samples: 1,
        iterations: 25,
        step_size: 0.02,
        decay: 1.0,
        seed: 17,
        init: InitDist::PointMass(DVector::from_vec(vec![0.5])),
        eval_samples: 1,
    };
    let log = train(&m, &m, &policy, &DVector::zeros(horizon), &reward, &params).expect("train");
    println!("exact-model ascent toward the setpoint (concave quadratic):");
    for r in &log.records {
        println!("iter {:3}  reward {:+.8}  |g| {:.3e}", r.iter, r.mean_reward, r.grad_norm);
    }
    let drops = log
        .records
        .windows(2)
        .filter(|w| w[1].mean_reward < w[0].mean_reward - 1e-9)
        .count();
    println!("reward decreases observed: {drops}");
}
