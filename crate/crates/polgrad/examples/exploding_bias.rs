//! How pointwise model error is magnified along the horizon: the propagation
//! error splits exactly into an input-channel term and a state-channel term,
//! and both explode under unstable open-loop dynamics while a stabilizing
//! proportional gain keeps them flat.
//!
//!     cargo run --release --example exploding_bias

use nalgebra::DMatrix;
use polgrad::diagnostics::error_decomposition;
use polgrad::dynamics::JacobianPair;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn main() {
    let (a, a_hat, b) = (2.0, 2.2, 1.0);
    let horizon = 12;
    let true_jacs: Vec<JacobianPair> = (0..horizon)
        .map(|_| JacobianPair { a: scalar(a), b: scalar(b) })
        .collect();
    let model_jacs: Vec<JacobianPair> = (0..horizon)
        .map(|_| JacobianPair { a: scalar(a_hat), b: scalar(b) })
        .collect();

    println!("open loop (true rate {a}, model rate {a_hat}):");
    println!("  t   error          state-channel   residual");
    let open = error_decomposition(&true_jacs, &model_jacs, &vec![DMatrix::zeros(1, 1); horizon]);
    for t in 1..=horizon {
        let e = open.entry(t, 0).unwrap();
        println!(
            "{t:4}   {:+.6e}  {:+.6e}   {:+.1e}",
            e.lhs[(0, 0)],
            e.term_a[(0, 0)],
            e.residual[(0, 0)]
        );
    }

    // The same comparison under u = k (target - x): closed-loop rates
    // a - b k and a_hat - b k are both inside the unit circle.
    let k = 1.5;
    let k_seq = vec![scalar(-k); horizon];
    let closed = error_decomposition(&true_jacs, &model_jacs, &k_seq);
    println!("\nfeedback gain {k} (closed-loop rates {} and {}):", a - b * k, a_hat - b * k);
    println!("  t   error          state-channel   residual");
    for t in 1..=horizon {
        let e = closed.entry(t, 0).unwrap();
        println!(
            "{t:4}   {:+.6e}  {:+.6e}   {:+.1e}",
            e.lhs[(0, 0)],
            e.term_a[(0, 0)],
            e.residual[(0, 0)]
        );
    }
    println!("\nmax decomposition residual: {:.2e} (identity holds to rounding)", closed.max_residual().max(open.max_residual()));
}
