//! Roll the nominal tracking controller around the figure-8 on the
//! high-fidelity car and report how far it strays from the path.
//!
//!     cargo run --release --example rollout_car

use nalgebra::DVector;
use polgrad::dynamics::{rollout, CarParams, DynamicsModel};
use polgrad::policy::{Policy, ReferencePath, TrackedModel, TrackingPolicy, TrackingShape};

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
    let mut tracking = TrackingPolicy::new(TrackedModel::Car, path.clone(), [0.5, 2.5], 0.1);
    tracking.shape = TrackingShape {
        c_along: 1.0,
        c_lateral: 0.5,
    };
    let policy = Policy::Tracking(tracking);
    let theta = DVector::zeros(0);

    let start = path.point_at(0.0);
    let x0 = DVector::from_vec(vec![start.x, start.y, 3.0, start.heading]);
    let laps = 3;
    let steps = 55 * laps;
    let traj = rollout(&truth, &model, &policy, &theta, &x0, steps).expect("rollout");

    println!("nominal tracking controller on the high-fidelity car, {laps} laps");
    println!("step  time   position            speed  dist-to-reference");
    for t in (0..=steps).step_by(11) {
        let s = &traj.states[t];
        let p = path.point_at(t as f64 * 0.1);
        let dist = ((s[0] - p.x).powi(2) + (s[1] - p.y).powi(2)).sqrt();
        println!(
            "{t:4}  {:4.1}s  ({:+6.2}, {:+6.2}) m  {:4.2}  {dist:.3} m",
            t as f64 * 0.1,
            s[0],
            s[1],
            s[2]
        );
    }
    println!("input clamping events: {}", traj.clamp_events());
    println!("(model mismatch keeps the bare controller off the path; see train_figure8)");
}
