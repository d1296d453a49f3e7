//! Full horizon scaling study on the scalar pair: gradient bias, estimator
//! variance, and Hessian norm per horizon, with fitted growth regimes.
//!
//!     cargo run --release --example scaling_study

use nalgebra::DVector;
use polgrad::diagnostics::{scaling_study, ScalingStudyConfig, StudyInstance};
use polgrad::dynamics::DynamicsModel;
use polgrad::policy::Policy;
use polgrad::reward::RewardFunction;
use polgrad::trainer::InitDist;

fn run(label: &str, gain: f64, b_hat: f64) {
    let cfg = ScalingStudyConfig {
        true_model: DynamicsModel::ScalarLinear { a: 1.2, b: 1.0 },
        model: DynamicsModel::ScalarLinear { a: 1.3, b: b_hat },
        instance: Box::new(move |horizon| StudyInstance {
            policy: if gain == 0.0 {
                Policy::open_loop(1, horizon)
            } else {
                Policy::scalar_tracking(gain, horizon)
            },
            theta: DVector::zeros(horizon),
            // Setpoint reward along a bounded trajectory: the bias growth
            // rate is then governed purely by the transition products.
            reward: RewardFunction::setpoint(
                DVector::from_vec(vec![0.5]),
                DVector::from_vec(vec![1.0]),
                horizon,
            ),
        }),
        horizons: vec![5, 10, 15, 20, 25, 30, 35, 40],
        batch: 1,
        seeds: 64,
        seed_base: 1000,
        init: InitDist::UniformBox {
            lo: DVector::from_vec(vec![-1.0]),
            hi: DVector::from_vec(vec![1.0]),
        },
        bias_x0: DVector::from_vec(vec![0.0]),
        measure_hessian: true,
    };
    let result = scaling_study(&cfg).expect("study");
    println!("== {label} ==");
    println!("   T    bias            variance        |H|");
    for row in &result.rows {
        println!(
            "{:4}    {:12.6e}    {:12.6e}    {:12.6e}",
            row.horizon,
            row.bias_norm,
            row.variance,
            row.hessian_norm.unwrap()
        );
    }
    println!(
        "bias fit:     {} (exp slope {:+.4}, poly degree {:+.2})",
        result.bias_fit.regime, result.bias_fit.exp_slope, result.bias_fit.poly_slope
    );
    println!(
        "variance fit: {} (exp slope {:+.4}, poly degree {:+.2})",
        result.variance_fit.regime, result.variance_fit.exp_slope, result.variance_fit.poly_slope
    );
    let h = result.hessian_fit.as_ref().unwrap();
    println!("hessian fit:  {} (exp slope {:+.4}, poly degree {:+.2})\n", h.regime, h.exp_slope, h.poly_slope);
}

fn main() {
    run("open loop, rates 1.2 / 1.3", 0.0, 1.0);
    // Gain 0.7 puts both closed-loop rates at 0.5.
    run("feedback k = 0.7, closed-loop rate 0.5 for both", 0.7, (1.3 - 0.5) / 0.7);
}
