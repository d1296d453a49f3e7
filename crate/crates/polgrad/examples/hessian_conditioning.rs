//! Curvature concentration and condition numbers of the scalar regulation
//! problem: open loop, the earliest parameters carry geometrically more
//! curvature and the condition number explodes with the horizon; under a
//! stabilizing proportional law both stay flat.
//!
//!     cargo run --release --example hessian_conditioning

use nalgebra::DVector;
use polgrad::diagnostics::{hessian_fd, hessian_scalar_lq};
use polgrad::dynamics::DynamicsModel;
use polgrad::policy::Policy;
use polgrad::reward::RewardFunction;

fn main() {
    let (a, b, q) = (2.0, 1.0, 1.0);
    let m = DynamicsModel::ScalarLinear { a, b };
    println!("   T    kappa(ref, open)  kappa(fd, open)  kappa(ref, k=1.5)  kappa(fd, k=1.5)");
    for horizon in [3usize, 5, 8, 12, 16, 20] {
        let mut row = format!("{horizon:4}");
        for k in [0.0, 1.5] {
            let reference = hessian_scalar_lq(a, b, k, q, horizon);
            let policy = if k == 0.0 {
                Policy::open_loop(1, horizon)
            } else {
                Policy::scalar_tracking(k, horizon)
            };
            let fd = hessian_fd(
                &m,
                &policy,
                &DVector::zeros(horizon),
                &RewardFunction::scalar_lq(q, horizon),
                &DVector::from_vec(vec![1.0]),
                horizon,
            )
            .expect("hessian");
            row += &format!("    {:14.4e}  {:14.4e}", reference.condition_number, fd.condition_number);
            if k == 1.5 {
                row = row.replacen("    ", "     ", 1);
            }
        }
        println!("{row}");
    }
    println!("\nreference curve at T=3, open loop: {:?} (condition number 7)", hessian_scalar_lq(a, b, 0.0, q, 3).deltas);
    println!("feedback flattens curvature: every entry below q*b/(1-(a-bk)) = 2");
}
