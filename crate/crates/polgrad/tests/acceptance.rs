//! Acceptance suite: one test per exit criterion, each printing a summary
//! line (run with `--nocapture` to see them). Tolerances are pinned in the
//! assertions.
//!
//!     cargo test --release --test acceptance -- --test-threads=1 --nocapture

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use polgrad::cli;
use polgrad::config::ExperimentConfig;
use polgrad::diagnostics::{
    error_decomposition, hessian_fd, hessian_scalar_lq, scaling_study, Regime, ScalingStudyConfig,
    StudyInstance,
};
use polgrad::dynamics::{rollout, CarParams, DynamicsModel, JacobianPair};
use polgrad::estimator::{
    batch_gradient, finite_difference_gradient, gradient_backward, gradient_forward,
    relative_error, sensitivities_forward, JacobianSource,
};
use polgrad::policy::{
    NeuralTrackingPolicy, Policy, ReferencePath, TrackedModel, TrackingPolicy,
};
use polgrad::reward::RewardFunction;
use polgrad::trainer::{train, InitDist, TrainParams};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn config_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

/// Randomized instances spanning all four models and all four policy
/// classes, constructed in non-saturated input regimes.
fn random_instance(
    rng: &mut ChaCha8Rng,
    which: usize,
) -> (
    DynamicsModel,
    DynamicsModel,
    Policy,
    DVector<f64>,
    DVector<f64>,
    usize,
    RewardFunction,
) {
    let wide_figure8 = ReferencePath::Figure8 {
        diameter: 6.0,
        lap_time: 22.0,
        right_first: false,
    };
    let horizon = rng.gen_range(3..9);
    match which % 6 {
        0 => {
            let truth = DynamicsModel::ScalarLinear {
                a: rng.gen_range(0.5..1.4),
                b: rng.gen_range(0.5..1.2),
            };
            let model = DynamicsModel::ScalarLinear {
                a: rng.gen_range(0.5..1.4),
                b: rng.gen_range(0.5..1.2),
            };
            let policy = Policy::open_loop(1, horizon);
            let theta = DVector::from_fn(horizon, |_, _| rng.gen_range(-0.5..0.5));
            let x0 = DVector::from_vec(vec![rng.gen_range(-1.0..1.0)]);
            let reward = RewardFunction::scalar_lq(0.5, horizon);
            (truth, model, policy, theta, x0, horizon, reward)
        }
        1 => {
            let truth = DynamicsModel::ScalarLinear {
                a: rng.gen_range(0.8..1.6),
                b: 1.0,
            };
            let model = DynamicsModel::ScalarLinear {
                a: rng.gen_range(0.8..1.6),
                b: rng.gen_range(0.8..1.2),
            };
            let policy = Policy::scalar_tracking(rng.gen_range(0.5..1.2), horizon);
            let theta = DVector::from_fn(horizon, |_, _| rng.gen_range(-0.5..0.5));
            let x0 = DVector::from_vec(vec![rng.gen_range(-1.0..1.0)]);
            let reward = RewardFunction::scalar_lq(0.5, horizon);
            (truth, model, policy, theta, x0, horizon, reward)
        }
        2 => {
            let truth = DynamicsModel::KinematicCar { dt: 0.1 };
            let model = DynamicsModel::CarHiFi {
                dt: 0.1,
                params: CarParams::default().scaled(0.9),
            };
            let policy = Policy::open_loop(2, horizon);
            let theta = DVector::from_fn(2 * horizon, |i, _| {
                if i % 2 == 0 {
                    rng.gen_range(0.2..0.8)
                } else {
                    rng.gen_range(-0.5..0.5)
                }
            });
            let x0 = DVector::from_vec(vec![
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.8..1.5),
                rng.gen_range(-0.5..0.5),
            ]);
            let reward = RewardFunction::setpoint(
                DVector::from_vec(vec![1.0, 1.0, 0.1, 0.0]),
                DVector::from_vec(vec![1.0, 0.5, 1.0, 0.0]),
                horizon,
            );
            (truth, model, policy, theta, x0, horizon, reward)
        }
        3 => {
            let truth = DynamicsModel::Unicycle { dt: 0.1 };
            let model = DynamicsModel::Unicycle { dt: 0.1 };
            let path = ReferencePath::standard_figure8();
            let base = TrackingPolicy::new(TrackedModel::Unicycle, path.clone(), [1.0, 1.5], 0.1);
            let policy = Policy::NeuralTracking(NeuralTrackingPolicy::new(base, &[6, 6]));
            let theta = DVector::from_fn(policy.param_count(), |_, _| rng.gen_range(-0.3..0.3));
            let x0 = DVector::from_vec(vec![
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                std::f64::consts::FRAC_PI_2 + rng.gen_range(-0.3..0.3),
            ]);
            let reward = RewardFunction::from_reference(
                DVector::from_vec(vec![1.0, 1.0, 0.0]),
                &path,
                TrackedModel::Unicycle,
                horizon,
                0.1,
            );
            (truth, model, policy, theta, x0, horizon, reward)
        }
        4 => {
            let truth = DynamicsModel::CarHiFi {
                dt: 0.1,
                params: CarParams::default(),
            };
            let model = DynamicsModel::KinematicCar { dt: 0.1 };
            let base = TrackingPolicy::new(TrackedModel::Car, wide_figure8.clone(), [0.6, 1.2], 0.1);
            let start = wide_figure8.point_at(0.0);
            let policy = Policy::NeuralTracking(NeuralTrackingPolicy::new(base, &[6, 6]));
            let theta = DVector::from_fn(policy.param_count(), |_, _| rng.gen_range(-0.02..0.02));
            let x0 = DVector::from_vec(vec![
                start.x + rng.gen_range(-0.05..0.05),
                start.y + rng.gen_range(-0.05..0.05),
                rng.gen_range(1.3..1.45),
                start.heading + rng.gen_range(-0.05..0.05),
            ]);
            let reward = RewardFunction::from_reference(
                DVector::from_vec(vec![1.0, 1.0, 0.1, 0.0]),
                &wide_figure8,
                TrackedModel::Car,
                horizon,
                0.1,
            );
            (truth, model, policy, theta, x0, horizon, reward)
        }
        _ => {
            let truth = DynamicsModel::CarHiFi {
                dt: 0.1,
                params: CarParams::default(),
            };
            let model = DynamicsModel::CarHiFi {
                dt: 0.1,
                params: CarParams::default().scaled(0.8),
            };
            let base = TrackingPolicy::new(TrackedModel::Car, wide_figure8.clone(), [0.6, 1.2], 0.1);
            let start = wide_figure8.point_at(0.0);
            let policy = Policy::Tracking(base);
            let theta = DVector::zeros(0);
            let x0 = DVector::from_vec(vec![
                start.x + rng.gen_range(-0.05..0.05),
                start.y + rng.gen_range(-0.05..0.05),
                rng.gen_range(1.3..1.45),
                start.heading + rng.gen_range(-0.05..0.05),
            ]);
            let reward = RewardFunction::from_reference(
                DVector::from_vec(vec![1.0, 1.0, 0.1, 0.0]),
                &wide_figure8,
                TrackedModel::Car,
                horizon,
                0.1,
            );
            (truth, model, policy, theta, x0, horizon, reward)
        }
    }
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let instances = 60;
    let mut max_fwd_bwd = 0.0_f64;
    let mut max_true_fd = 0.0_f64;
    for i in 0..instances {
        let (truth, model, policy, theta, x0, horizon, reward) = random_instance(&mut rng, i);
        let traj = rollout(&truth, &model, &policy, &theta, &x0, horizon).unwrap();
        assert_eq!(traj.clamp_events(), 0, "instance {i} saturated an input");
        for source in [JacobianSource::True, JacobianSource::Model] {
            let sens = sensitivities_forward(&traj, source, &policy, &theta).unwrap();
            let fwd = gradient_forward(&traj, &reward, &sens, source);
            let bwd = gradient_backward(&traj, source, &policy, &theta, &reward).unwrap();
            max_fwd_bwd = max_fwd_bwd.max(relative_error(&fwd.g, &bwd.g));
        }
        let fd = finite_difference_gradient(&truth, &policy, &theta, &reward, &x0, horizon, 1e-5)
            .unwrap();
        let g_true =
            gradient_backward(&traj, JacobianSource::True, &policy, &theta, &reward).unwrap();
        max_true_fd = max_true_fd.max(relative_error(&g_true.g, &fd.g));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = max_fwd_bwd <= 1e-10 && max_true_fd <= 1e-5 && elapsed < 30.0;
    println!(
        "criterion 1 (gradient correctness): {} — {instances} instances, forward/backward {max_fwd_bwd:.2e} (tol 1e-10), true-vs-fd {max_true_fd:.2e} (tol 1e-5), {elapsed:.1}s (budget 30s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(max_fwd_bwd <= 1e-10, "forward/backward disagree: {max_fwd_bwd:.3e}");
    assert!(max_true_fd <= 1e-5, "true-Jacobian estimate vs fd: {max_true_fd:.3e}");
    assert!(elapsed < 30.0, "runtime {elapsed:.1}s exceeds 30s");
}

#[test]
fn criterion_2_error_propagation_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_ratio = 0.0_f64;
    for _ in 0..40 {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=2);
        let horizon = rng.gen_range(2..=20);
        let mk_true: Vec<JacobianPair> = (0..horizon)
            .map(|_| JacobianPair {
                a: DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.1..1.1)),
                b: DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0)),
            })
            .collect();
        let mk_model: Vec<JacobianPair> = mk_true
            .iter()
            .map(|j| JacobianPair {
                a: &j.a + DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.2..0.2)),
                b: &j.b + DMatrix::from_fn(n, m, |_, _| rng.gen_range(-0.2..0.2)),
            })
            .collect();
        let k_seq: Vec<DMatrix<f64>> = (0..horizon)
            .map(|_| DMatrix::from_fn(m, n, |_, _| rng.gen_range(-0.3..0.3)))
            .collect();
        let d = error_decomposition(&mk_true, &mk_model, &k_seq);
        worst_ratio = worst_ratio.max(d.max_residual() / d.scale);
    }

    // The scalar open-loop instance with rates 2 and 2.2.
    let scalar = |v: f64| DMatrix::from_element(1, 1, v);
    let horizon = 12;
    let true_jacs: Vec<JacobianPair> = (0..horizon)
        .map(|_| JacobianPair {
            a: scalar(2.0),
            b: scalar(1.0),
        })
        .collect();
    let model_jacs: Vec<JacobianPair> = (0..horizon)
        .map(|_| JacobianPair {
            a: scalar(2.2),
            b: scalar(1.0),
        })
        .collect();
    let d = error_decomposition(&true_jacs, &model_jacs, &vec![DMatrix::zeros(1, 1); horizon]);
    worst_ratio = worst_ratio.max(d.max_residual() / d.scale);
    for t in 1..=horizon {
        let e = d.entry(t, 0).unwrap();
        let expected = 2.2_f64.powi((t - 1) as i32) - 2.0_f64.powi((t - 1) as i32);
        assert!((e.lhs[(0, 0)] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_ratio <= 1e-12 && elapsed < 5.0;
    println!(
        "criterion 2 (error-propagation identity): {} — max residual/scale {worst_ratio:.2e} (tol 1e-12), {elapsed:.1}s (budget 5s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(worst_ratio <= 1e-12, "decomposition residual {worst_ratio:.3e}");
    assert!(elapsed < 5.0);
}

#[test]
fn criterion_3_running_example_hessian_reference_curves() {
    let start = Instant::now();
    let open = hessian_scalar_lq(2.0, 1.0, 0.0, 1.0, 3);
    assert_eq!(open.deltas, vec![14.0, 6.0, 2.0]);
    assert_eq!(open.condition_number, 7.0);
    let mut max_fb_kappa = 0.0_f64;
    for horizon in 3..=50 {
        let fb = hessian_scalar_lq(2.0, 1.0, 1.5, 1.0, horizon);
        max_fb_kappa = max_fb_kappa.max(fb.condition_number);
        assert!(fb.condition_number < 2.0, "T={horizon}: {}", fb.condition_number);
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 3a/3b (reference Hessian curves): PASS — open loop T=3 gives (14,6,2) with kappa 7; feedback kappa stays below 2 for T in 3..=50 (max {max_fb_kappa:.4}), {elapsed:.2}s"
    );
}

/// The finite-difference sub-assertions of criterion 3, asserted exactly as
/// stated. The measured Hessian of the quadratic rollout objective is the
/// Gram matrix of state sensitivities: it is dense (off-diagonals such as
/// H[0][1] = -20 at T=3) and its diagonal grows at the squared rate, so its
/// condition number is 195.16 at T=3 rather than the reference curve's 7.
/// Both facts follow from the chain rule and are confirmed by the
/// closed-form oracle in the diagnostics unit tests; the assertions below
/// therefore fail, and are kept as stated rather than weakened.
#[test]
fn criterion_3_hessian_fd_diagonality_and_kappa_match() {
    let start = Instant::now();
    let m = DynamicsModel::ScalarLinear { a: 2.0, b: 1.0 };
    let horizon = 3;
    let policy = Policy::open_loop(1, horizon);
    let theta = DVector::zeros(horizon);
    let reward = RewardFunction::scalar_lq(1.0, horizon);
    let x0 = DVector::from_vec(vec![1.0]);
    let fd = hessian_fd(&m, &policy, &theta, &reward, &x0, horizon).unwrap();

    let scale = fd.h.amax();
    let mut max_off_diag = 0.0_f64;
    for i in 0..horizon {
        for j in 0..horizon {
            if i != j {
                max_off_diag = max_off_diag.max(fd.h[(i, j)].abs());
            }
        }
    }
    let reference = hessian_scalar_lq(2.0, 1.0, 0.0, 1.0, horizon);
    let kappa_gap =
        (fd.condition_number - reference.condition_number).abs() / reference.condition_number;

    let diag_ok = max_off_diag <= 1e-8 * scale;
    let kappa_ok = kappa_gap <= 1e-4;
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 3c/3d (fd Hessian diagonality & kappa match): {} — off-diag {max_off_diag:.3e} vs 1e-8*scale {:.3e}; fd kappa {:.4} vs reference 7 (gap {kappa_gap:.3e}, tol 1e-4); measured fd diag {:?}; {elapsed:.2}s (budget 60s shared)",
        if diag_ok && kappa_ok { "PASS" } else { "FAIL" },
        1e-8 * scale,
        fd.condition_number,
        (0..horizon).map(|t| fd.h[(t, t)]).collect::<Vec<_>>()
    );
    assert!(
        max_off_diag <= 1e-8 * scale,
        "fd Hessian off-diagonal {max_off_diag:.3e} exceeds 1e-8*scale = {:.3e}: the quadratic \
         rollout objective's Hessian is the dense Gram matrix of sensitivities",
        1e-8 * scale
    );
    assert!(
        kappa_gap <= 1e-4,
        "fd condition number {:.6} differs from the reference curve's {} (relative gap {kappa_gap:.3e}): \
         the true diagonal grows at the squared rate",
        fd.condition_number,
        reference.condition_number
    );
}

/// Structural conditioning facts that do hold for the measured Hessian:
/// the open-loop condition number explodes with the horizon while the
/// feedback condition number stays bounded.
#[test]
fn criterion_3_supplement_measured_conditioning_structure() {
    let start = Instant::now();
    let m = DynamicsModel::ScalarLinear { a: 2.0, b: 1.0 };
    let x0 = DVector::from_vec(vec![1.0]);
    let mut open_kappas = Vec::new();
    let mut fb_kappas = Vec::new();
    for horizon in [3usize, 6, 9, 12] {
        let reward = RewardFunction::scalar_lq(1.0, horizon);
        let open = hessian_fd(
            &m,
            &Policy::open_loop(1, horizon),
            &DVector::zeros(horizon),
            &reward,
            &x0,
            horizon,
        )
        .unwrap();
        open_kappas.push(open.condition_number);
        let fb = hessian_fd(
            &m,
            &Policy::scalar_tracking(1.5, horizon),
            &DVector::zeros(horizon),
            &reward,
            &x0,
            horizon,
        )
        .unwrap();
        fb_kappas.push(fb.condition_number);
    }
    // Open loop: kappa multiplies by at least the squared rate per step.
    for w in open_kappas.windows(2) {
        assert!(w[1] > 4.0 * w[0], "open-loop kappa must keep exploding: {open_kappas:?}");
    }
    // Feedback: kappa bounded (saturates under 10 for every horizon).
    for k in &fb_kappas {
        assert!(*k < 10.0, "feedback kappa stays bounded: {fb_kappas:?}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 3 supplement (measured conditioning): PASS — open-loop fd kappa {open_kappas:?} explodes, feedback fd kappa {fb_kappas:?} bounded, {elapsed:.1}s"
    );
}

fn scalar_bias_study(
    a: f64,
    a_hat: f64,
    b: f64,
    b_hat: f64,
    gain: f64,
    setpoint_probe: bool,
    seeds: usize,
) -> ScalingStudyConfig {
    ScalingStudyConfig {
        true_model: DynamicsModel::ScalarLinear { a, b },
        model: DynamicsModel::ScalarLinear { a: a_hat, b: b_hat },
        instance: Box::new(move |horizon| StudyInstance {
            policy: if gain == 0.0 {
                Policy::open_loop(1, horizon)
            } else {
                Policy::scalar_tracking(gain, horizon)
            },
            theta: DVector::zeros(horizon),
            reward: if setpoint_probe {
                RewardFunction::setpoint(
                    DVector::from_vec(vec![0.5]),
                    DVector::from_vec(vec![1.0]),
                    horizon,
                )
            } else {
                RewardFunction::scalar_lq(0.5, horizon)
            },
        }),
        horizons: vec![5, 10, 15, 20, 25, 30, 35, 40],
        batch: 1,
        seeds,
        seed_base: 1000,
        init: InitDist::UniformBox {
            lo: DVector::from_vec(vec![-1.0]),
            hi: DVector::from_vec(vec![1.0]),
        },
        bias_x0: DVector::from_vec(vec![if setpoint_probe { 0.0 } else { 1.0 }]),
        measure_hessian: false,
    }
}

#[test]
fn criterion_4_bias_scaling() {
    let start = Instant::now();
    // Open loop, bounded-trajectory probe: the bias growth rate sits between
    // the two spectral radii.
    let open = scaling_study(&scalar_bias_study(1.2, 1.3, 1.0, 1.0, 0.0, true, 2)).unwrap();
    let slope = open.bias_fit.exp_slope;
    let (lo, hi) = (1.2_f64.ln() - 0.1, 1.3_f64.ln() + 0.1);

    // Stabilized feedback with closed-loop radius 0.5 for both systems;
    // states decay from the probe point, so the bias saturates.
    let k = 0.7;
    let b_hat = (1.3 - 0.5) / k;
    let feedback = scaling_study(&scalar_bias_study(1.2, 1.3, 1.0, b_hat, k, false, 2)).unwrap();
    let fb_slope = feedback.bias_fit.exp_slope;

    // 10x comparison at T = 40 on matching probes.
    let open_sp_bias = open.rows.last().unwrap().bias_norm;
    let fb_sp = scaling_study(&scalar_bias_study(1.2, 1.3, 1.0, b_hat, k, true, 2)).unwrap();
    let fb_sp_bias = fb_sp.rows.last().unwrap().bias_norm;
    let ratio = open_sp_bias / fb_sp_bias;

    let elapsed = start.elapsed().as_secs_f64();
    let pass = slope >= lo && slope <= hi && fb_slope <= 0.02 && ratio > 10.0 && elapsed < 120.0;
    println!(
        "criterion 4 (bias scaling): {} — open-loop slope {slope:.4} in [{lo:.4}, {hi:.4}]; feedback slope {fb_slope:.4} <= 0.02; bias(T=40) open/feedback = {ratio:.1}x (need > 10x); {elapsed:.1}s (budget 120s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(slope >= lo && slope <= hi, "open-loop bias slope {slope}");
    assert!(fb_slope <= 0.02, "feedback bias slope {fb_slope}");
    assert!(ratio > 10.0, "bias ratio {ratio}");
    assert!(elapsed < 120.0);
}

#[test]
fn criterion_5_variance_scaling() {
    let start = Instant::now();
    // N * Var constant across batch sizes (64 seeds each).
    let truth = DynamicsModel::ScalarLinear { a: 1.2, b: 1.0 };
    let model = DynamicsModel::ScalarLinear { a: 1.3, b: 1.0 };
    let horizon = 10;
    let policy = Policy::open_loop(1, horizon);
    let theta = DVector::zeros(horizon);
    let reward = RewardFunction::scalar_lq(0.5, horizon);
    let init = InitDist::UniformBox {
        lo: DVector::from_vec(vec![-1.0]),
        hi: DVector::from_vec(vec![1.0]),
    };
    let seeds = 64;
    let mut scaled = Vec::new();
    for n in [1usize, 4, 16, 64] {
        let estimates: Vec<DVector<f64>> = (0..seeds)
            .map(|s| {
                batch_gradient(
                    &truth,
                    &model,
                    &policy,
                    &theta,
                    &reward,
                    horizon,
                    &init,
                    n,
                    40_000 + 1000 * n as u64 + s as u64,
                )
                .unwrap()
                .g
            })
            .collect();
        let mean =
            estimates.iter().fold(DVector::zeros(horizon), |acc, g| acc + g) / seeds as f64;
        let trace = estimates
            .iter()
            .map(|g| (g - &mean).norm_squared())
            .sum::<f64>()
            / (seeds as f64 - 1.0);
        scaled.push(n as f64 * trace);
    }
    let spread = scaled.iter().cloned().fold(f64::MIN, f64::max)
        / scaled.iter().cloned().fold(f64::MAX, f64::min);

    // Growth regimes from the seed-ensemble variance.
    let open = scaling_study(&scalar_bias_study(1.2, 1.3, 1.0, 1.0, 0.0, false, 64)).unwrap();
    let k = 0.7;
    let b_hat = (1.3 - 0.5) / k;
    let feedback = scaling_study(&scalar_bias_study(1.2, 1.3, 1.0, b_hat, k, false, 64)).unwrap();

    let elapsed = start.elapsed().as_secs_f64();
    let pass = spread <= 1.5
        && open.variance_fit.regime == Regime::Exponential
        && feedback.variance_fit.regime == Regime::Polynomial
        && elapsed < 300.0;
    println!(
        "criterion 5 (variance scaling): {} — N*Var spread {spread:.3} (tol 1.5x) over N in {{1,4,16,64}}; unstable regime {}, stabilized regime {}; {elapsed:.1}s (budget 300s)",
        if pass { "PASS" } else { "FAIL" },
        open.variance_fit.regime,
        feedback.variance_fit.regime
    );
    assert!(spread <= 1.5, "N*Var spread {spread}: {scaled:?}");
    assert_eq!(open.variance_fit.regime, Regime::Exponential);
    assert_eq!(feedback.variance_fit.regime, Regime::Polynomial);
    assert!(elapsed < 300.0);
}

#[test]
fn criterion_6_training_improvement() {
    let start = Instant::now();
    // Figure-8 task: high-fidelity truth, kinematic model, neural-corrected
    // tracking, 10 seeds.
    let cfg = ExperimentConfig::load(&config_path("figure8_car.toml")).unwrap();
    let mut first_rewards = Vec::new();
    let mut last_rewards = Vec::new();
    let mut first_rms = Vec::new();
    let mut last_rms = Vec::new();
    for seed in 0..10u64 {
        let built = cfg.build(Some(seed)).unwrap();
        assert_eq!(built.train.samples, 5);
        assert_eq!(built.train.iterations, 15);
        assert_eq!(built.train.step_size, 0.1);
        assert_eq!(built.train.horizon, 55);
        let log = train(
            &built.env,
            &built.model,
            &built.policy,
            &built.theta0,
            &built.reward,
            &built.train,
        )
        .unwrap();
        first_rewards.push(log.records[0].mean_reward);
        last_rewards.push(log.records.last().unwrap().mean_reward);
        first_rms.push(log.records[0].rms_error);
        last_rms.push(log.records.last().unwrap().rms_error);
    }
    let rms_before = median(first_rms);
    let rms_after = median(last_rms);
    let rms_drop = (rms_before - rms_after) / rms_before;
    let reward_before = median(first_rewards);
    let reward_after = median(last_rewards);

    // Exact-model scalar regulation: reward non-decreasing at every step.
    let m = DynamicsModel::ScalarLinear { a: 0.9, b: 1.0 };
    let horizon = 10;
    let policy = Policy::open_loop(1, horizon);
    let lq_reward = RewardFunction::setpoint(
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
        seed: 5,
        init: InitDist::PointMass(DVector::from_vec(vec![0.5])),
        eval_samples: 1,
    };
    let log = train(&m, &m, &policy, &DVector::zeros(horizon), &lq_reward, &params).unwrap();
    let mut monotone = true;
    for w in log.records.windows(2) {
        if w[1].mean_reward < w[0].mean_reward - 1e-9 {
            monotone = false;
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    let pass = rms_drop >= 0.30 && reward_after > reward_before && monotone && elapsed < 600.0;
    println!(
        "criterion 6 (training improvement): {} — median RMS {rms_before:.4} -> {rms_after:.4} m ({:.1}% drop, need >= 30%); median reward {reward_before:+.5} -> {reward_after:+.5}; exact-model ascent monotone: {monotone}; {elapsed:.1}s (budget 600s)",
        if pass { "PASS" } else { "FAIL" },
        100.0 * rms_drop
    );
    assert!(rms_drop >= 0.30, "median RMS drop {:.1}% < 30%", 100.0 * rms_drop);
    assert!(reward_after > reward_before, "median reward did not improve");
    assert!(monotone, "exact-model ascent decreased the reward");
    assert!(elapsed < 600.0);
}

#[test]
fn criterion_7_mismatch_robustness() {
    let start = Instant::now();
    let base = ExperimentConfig::load(&config_path("figure8_mismatch.toml")).unwrap();
    let mut finals = Vec::new();
    for gamma in [1.0_f64, 0.8, 0.6] {
        let mut cfg = base.clone();
        cfg.model.gamma = Some(gamma);
        let mut first_rewards = Vec::new();
        let mut last_rewards = Vec::new();
        for seed in 0..10u64 {
            let built = cfg.build(Some(seed)).unwrap();
            let log = train(
                &built.env,
                &built.model,
                &built.policy,
                &built.theta0,
                &built.reward,
                &built.train,
            )
            .unwrap();
            first_rewards.push(log.records[0].mean_reward);
            last_rewards.push(log.records.last().unwrap().mean_reward);
        }
        let before = median(first_rewards);
        let after = median(last_rewards);
        assert!(
            after > before,
            "gamma {gamma}: median reward {after} did not exceed initial {before}"
        );
        finals.push((gamma, after));
    }
    let best = finals
        .iter()
        .cloned()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = best.0 == 1.0 && elapsed < 900.0;
    println!(
        "criterion 7 (mismatch robustness): {} — final median rewards {:?}; best at gamma {}; {elapsed:.1}s (budget 900s)",
        if pass { "PASS" } else { "FAIL" },
        finals,
        best.0
    );
    assert_eq!(best.0, 1.0, "the exact model must attain the best final reward");
    assert!(elapsed < 900.0);
}

#[test]
fn criterion_8_reproducibility() {
    let start = Instant::now();
    let strip_wall_time = |csv: &str| -> String {
        csv.lines()
            .map(|line| {
                let mut cols: Vec<&str> = line.split(',').collect();
                cols.pop();
                cols.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };

    // train: identical bytes modulo the wall-time column.
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cli::cmd_train(&config_path("scalar_mismatch.toml"), a.path(), None, true).unwrap();
    cli::cmd_train(&config_path("scalar_mismatch.toml"), b.path(), None, true).unwrap();
    let log_a = std::fs::read_to_string(a.path().join("run_log.csv")).unwrap();
    let log_b = std::fs::read_to_string(b.path().join("run_log.csv")).unwrap();
    assert_eq!(strip_wall_time(&log_a), strip_wall_time(&log_b));
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().starts_with("theta_") {
            assert_eq!(
                std::fs::read(a.path().join(&name)).unwrap(),
                std::fs::read(b.path().join(&name)).unwrap(),
                "{name:?}"
            );
        }
    }

    // scaling: fully byte-identical.
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cli::cmd_scaling(&config_path("scaling_unstable.toml"), a.path(), None, true).unwrap();
    cli::cmd_scaling(&config_path("scaling_unstable.toml"), b.path(), None, true).unwrap();
    for name in ["scaling.csv", "scaling_summary.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }

    // example: every case fully byte-identical.
    for case in [
        cli::ExampleCase::Hessian,
        cli::ExampleCase::Blowup,
        cli::ExampleCase::Variance,
    ] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        cli::cmd_example(case, a.path(), true).unwrap();
        cli::cmd_example(case, b.path(), true).unwrap();
        for entry in std::fs::read_dir(a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                std::fs::read(a.path().join(&name)).unwrap(),
                std::fs::read(b.path().join(&name)).unwrap(),
                "{case:?}/{name:?}"
            );
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 8 (reproducibility): PASS — train/scaling/example byte-identical across reruns (wall-time column excluded), {elapsed:.1}s"
    );
}
