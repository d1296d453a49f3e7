//! The desk-scale flagship run: learn neural gain and reference corrections
//! for the figure-8 on the high-fidelity car, differentiating only the
//! kinematic model along real rollouts. One seed; see the acceptance suite
//! for the 10-seed median results.
//!
//!     cargo run --release --example train_figure8

use polgrad::config::ExperimentConfig;
use polgrad::trainer::train;
use std::path::Path;

fn main() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/figure8_car.toml");
    let built = ExperimentConfig::load(&config)
        .expect("load config")
        .build(Some(3))
        .expect("build experiment");
    println!(
        "figure-8 task: {} parameters, horizon {}, {} rollouts per update",
        built.theta0.len(),
        built.train.horizon,
        built.train.samples
    );
    let log = train(
        &built.env,
        &built.model,
        &built.policy,
        &built.theta0,
        &built.reward,
        &built.train,
    )
    .expect("train");
    for r in &log.records {
        println!(
            "iter {:3}  reward {:+.6}  rms tracking error {:.4} m  clamped steps {}",
            r.iter, r.mean_reward, r.rms_error, r.clamp_events
        );
    }
    let first = &log.records[0];
    let last = log.records.last().unwrap();
    println!(
        "\nrms error {:.4} -> {:.4} m ({:+.1}%)",
        first.rms_error,
        last.rms_error,
        100.0 * (last.rms_error - first.rms_error) / first.rms_error
    );
}
