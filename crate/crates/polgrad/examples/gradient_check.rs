//! Agreement of the three gradient routes on one mismatched-car instance:
//! the forward sensitivity form, the backward costate form, and central
//! finite differences of the rollout objective.
//!
//!     cargo run --release --example gradient_check

use nalgebra::DVector;
use polgrad::dynamics::{rollout, CarParams, DynamicsModel};
use polgrad::estimator::{
    finite_difference_gradient, gradient_backward, gradient_forward, relative_error,
    sensitivities_forward, JacobianSource,
};
use polgrad::policy::{NeuralTrackingPolicy, Policy, ReferencePath, TrackedModel, TrackingPolicy};
use polgrad::reward::RewardFunction;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    let truth = DynamicsModel::CarHiFi {
        dt: 0.1,
        params: CarParams {
            beta_a: 2.0,
            beta_omega: 1.0,
            c_v: 0.05,
            b_omega: 0.05,
        },
    };
    let model = DynamicsModel::KinematicCar { dt: 0.1 };
    let path = ReferencePath::standard_figure8();
    let base = TrackingPolicy::new(TrackedModel::Car, path.clone(), [0.5, 2.5], 0.1);
    let policy = Policy::NeuralTracking(NeuralTrackingPolicy::new(base, &[8, 8]));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let theta = DVector::from_fn(policy.param_count(), |_, _| rng.gen_range(-0.05..0.05));
    let horizon = 25;
    let reward = RewardFunction::from_reference(
        DVector::from_vec(vec![1.0, 1.0, 0.1, 0.0]),
        &path,
        TrackedModel::Car,
        horizon,
        0.1,
    );
    let start = path.point_at(0.0);
    let x0 = DVector::from_vec(vec![start.x, start.y, 3.2, start.heading]);

    let traj = rollout(&truth, &model, &policy, &theta, &x0, horizon).expect("rollout");
    println!("parameters: {}   horizon: {horizon}   clamped steps: {}", theta.len(), traj.clamp_events());

    for source in [JacobianSource::True, JacobianSource::Model] {
        let sens = sensitivities_forward(&traj, source, &policy, &theta).unwrap();
        let fwd = gradient_forward(&traj, &reward, &sens, source);
        let bwd = gradient_backward(&traj, source, &policy, &theta, &reward).unwrap();
        println!(
            "{source:?} jacobians: forward vs backward rel err = {:.3e}",
            relative_error(&fwd.g, &bwd.g)
        );
    }

    let fd = finite_difference_gradient(&truth, &policy, &theta, &reward, &x0, horizon, 1e-5).unwrap();
    let g_true = gradient_backward(&traj, JacobianSource::True, &policy, &theta, &reward).unwrap();
    let g_model = gradient_backward(&traj, JacobianSource::Model, &policy, &theta, &reward).unwrap();
    println!(
        "true jacobians vs finite differences: rel err = {:.3e}",
        relative_error(&g_true.g, &fd.g)
    );
    println!(
        "model jacobians vs finite differences: rel err = {:.3e}  <- model bias, expected",
        relative_error(&g_model.g, &fd.g)
    );
}
