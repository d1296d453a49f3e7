//! Save a policy checkpoint and restore it bit-exactly.
//!
//!     cargo run --example checkpoint_roundtrip

use nalgebra::DVector;
use polgrad::policy::{
    Checkpoint, NeuralTrackingPolicy, Policy, ReferencePath, TrackedModel, TrackingPolicy,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    let base = TrackingPolicy::new(
        TrackedModel::Car,
        ReferencePath::standard_figure8(),
        [0.5, 2.5],
        0.1,
    );
    let policy = Policy::NeuralTracking(NeuralTrackingPolicy::new(base, &[8, 8]));
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let theta = policy.init_params(&mut rng);

    let dir = std::env::temp_dir().join("polgrad_checkpoint_demo");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("theta.json");
    Checkpoint::new(&policy, &theta).save(&path).expect("save");
    let restored: DVector<f64> = Checkpoint::load(&path)
        .expect("load")
        .theta_for(&policy)
        .expect("shape");
    let identical = theta
        .iter()
        .zip(restored.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!("wrote {}", path.display());
    println!("{} parameters restored bit-exactly: {identical}", theta.len());
}
