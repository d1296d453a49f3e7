//! Robustness to deliberate model error: scale every physical parameter of
//! the training model by a mismatch coefficient and compare final rewards.
//! One seed per coefficient; the acceptance suite runs the 10-seed medians.
//!
//!     cargo run --release --example mismatch_study

use polgrad::config::ExperimentConfig;
use polgrad::trainer::train;
use std::path::Path;

fn main() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/figure8_mismatch.toml");
    let base = ExperimentConfig::load(&config).expect("load config");
    println!("training model = true car with all parameters scaled by gamma");
    for gamma in [1.0, 0.8, 0.6] {
        let mut cfg = base.clone();
        cfg.model.gamma = Some(gamma);
        let built = cfg.build(Some(3)).expect("build");
        let log = train(
            &built.env,
            &built.model,
            &built.policy,
            &built.theta0,
            &built.reward,
            &built.train,
        )
        .expect("train");
        let first = &log.records[0];
        let last = log.records.last().unwrap();
        println!(
            "gamma {gamma:.1}: reward {:+.6} -> {:+.6}, rms {:.4} -> {:.4} m",
            first.mean_reward, last.mean_reward, first.rms_error, last.rms_error
        );
    }
}
