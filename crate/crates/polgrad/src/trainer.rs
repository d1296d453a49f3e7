//! Plain batch gradient ascent: sample initial conditions, roll out on the
//! true system, estimate the batch gradient with the model, take a step.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::Instant;

use crate::dynamics::{rollout, DynamicsModel};
use crate::error::{Error, Result};
use crate::estimator::batch_gradient;
use crate::policy::Policy;
use crate::reward::RewardFunction;

/// Distribution of the initial state.
#[derive(Debug, Clone, PartialEq)]
pub enum InitDist {
    PointMass(DVector<f64>),
    UniformBox { lo: DVector<f64>, hi: DVector<f64> },
    /// Independent per-component normal.
    Gaussian { mean: DVector<f64>, std: DVector<f64> },
}

impl InitDist {
    pub fn dim(&self) -> usize {
        match self {
            InitDist::PointMass(x) => x.len(),
            InitDist::UniformBox { lo, .. } => lo.len(),
            InitDist::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// A representative point (the mean), used for deterministic probes.
    pub fn mean(&self) -> DVector<f64> {
        match self {
            InitDist::PointMass(x) => x.clone(),
            InitDist::UniformBox { lo, hi } => (lo + hi) / 2.0,
            InitDist::Gaussian { mean, .. } => mean.clone(),
        }
    }
}

/// Draw `n` initial conditions i.i.d. from `dist`; deterministic given the
/// seed.
pub fn sample_initial_conditions(dist: &InitDist, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match dist {
            InitDist::PointMass(x) => x.clone(),
            InitDist::UniformBox { lo, hi } => DVector::from_fn(lo.len(), |i, _| {
                if hi[i] > lo[i] {
                    rng.gen_range(lo[i]..hi[i])
                } else {
                    lo[i]
                }
            }),
            InitDist::Gaussian { mean, std } => {
                let normal = rand_distr_standard(&mut rng, mean.len());
                DVector::from_fn(mean.len(), |i, _| mean[i] + std[i] * normal[i])
            }
        })
        .collect()
}

/// Standard normal draws via Box-Muller, avoiding an extra dependency.
fn rand_distr_standard(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        out.push(r * c);
        if out.len() < n {
            out.push(r * s);
        }
    }
    out
}

/// Knobs of one training run.
#[derive(Debug, Clone)]
pub struct TrainParams {
    /// Rollout horizon in steps.
    pub horizon: usize,
    /// Initial conditions per update.
    pub samples: usize,
    /// Number of gradient ascent iterations.
    pub iterations: usize,
    /// Base step size.
    pub step_size: f64,
    /// Geometric decay: step at iteration k is `step_size * decay^k`.
    pub decay: f64,
    pub seed: u64,
    pub init: InitDist,
    /// Size of the held-out evaluation set (drawn once from `init`).
    pub eval_samples: usize,
}

impl TrainParams {
    pub fn step_at(&self, k: usize) -> f64 {
        self.step_size * self.decay.powi(k as i32)
    }
}

/// Per-iteration record. `wall_time_s` is the only field that varies between
/// reruns of the same seed.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub theta: DVector<f64>,
    pub mean_reward: f64,
    pub grad_norm: f64,
    pub rms_error: f64,
    pub clamp_events: usize,
    pub wall_time_s: f64,
}

/// Full log of a training run: one record per iteration plus the final
/// parameters (K+1 records including the initial evaluation).
#[derive(Debug, Clone)]
pub struct RunLog {
    pub records: Vec<IterationRecord>,
    pub final_theta: DVector<f64>,
}

/// Evaluation summary over a set of initial conditions.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub mean_reward: f64,
    pub per_sample: Vec<f64>,
    /// Root-mean-square position error against the reward's targets, over
    /// all steps and samples. Position means the state components the model
    /// treats as planar position (the full state for the scalar system).
    pub rms_error: f64,
    pub clamp_events: usize,
}

fn position_dims(n: usize) -> usize {
    // Planar models carry (x, y) first; the scalar system is its own position.
    if n >= 2 {
        2
    } else {
        1
    }
}

/// Roll out on the true system (no gradients) and report reward and RMS
/// tracking error.
pub fn evaluate(
    true_model: &DynamicsModel,
    policy: &Policy,
    theta: &DVector<f64>,
    reward: &RewardFunction,
    eval_set: &[DVector<f64>],
    horizon: usize,
) -> Result<EvalReport> {
    assert!(!eval_set.is_empty());
    let runs: Vec<Result<(f64, f64, usize, usize)>> = eval_set
        .par_iter()
        .map(|x0| {
            let traj = rollout(true_model, true_model, policy, theta, x0, horizon)?;
            let mut total = 0.0;
            let mut sq_err = 0.0;
            let mut err_count = 0;
            for t in 0..=horizon {
                total += reward.reward(t, &traj.states[t]);
                if let Some(target) = reward.target(t) {
                    let d = position_dims(target.len());
                    for i in 0..d {
                        sq_err += (traj.states[t][i] - target[i]).powi(2);
                    }
                    err_count += 1;
                }
            }
            Ok((total, sq_err, err_count, traj.clamp_events()))
        })
        .collect();
    let mut per_sample = Vec::with_capacity(eval_set.len());
    let mut sq_err = 0.0;
    let mut err_count = 0;
    let mut clamp_events = 0;
    for r in runs {
        let (total, sq, cnt, clamps) = r?;
        per_sample.push(total);
        sq_err += sq;
        err_count += cnt;
        clamp_events += clamps;
    }
    let mean_reward = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    let rms_error = if err_count > 0 {
        (sq_err / err_count as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(EvalReport {
        mean_reward,
        per_sample,
        rms_error,
        clamp_events,
    })
}

/// Seed for the batch draw of iteration `k`, derived from the master seed.
pub fn iteration_seed(master: u64, k: usize) -> u64 {
    master.wrapping_add((k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Seed for the held-out evaluation set.
pub fn eval_seed(master: u64) -> u64 {
    master ^ 0x5DEE_CE66_D1CE_1EAD
}

/// Run gradient ascent: at each iteration draw `samples` initial conditions,
/// unroll on the true system, estimate the batch gradient with the model,
/// and step `theta_{k+1} = theta_k + alpha_k g`. Returns K+1 records; the
/// final record carries the gradient at the final parameters.
pub fn train(
    true_model: &DynamicsModel,
    model: &DynamicsModel,
    policy: &Policy,
    theta0: &DVector<f64>,
    reward: &RewardFunction,
    params: &TrainParams,
) -> Result<RunLog> {
    let eval_set = sample_initial_conditions(&params.init, params.eval_samples.max(1), eval_seed(params.seed));
    let mut theta = theta0.clone();
    let mut records = Vec::with_capacity(params.iterations + 1);
    for k in 0..=params.iterations {
        let start = Instant::now();
        let eval = evaluate(true_model, policy, &theta, reward, &eval_set, params.horizon)
            .map_err(|e| attach_iteration(e, k))?;
        let grad = batch_gradient(
            true_model,
            model,
            policy,
            &theta,
            reward,
            params.horizon,
            &params.init,
            params.samples,
            iteration_seed(params.seed, k),
        )
        .map_err(|e| attach_iteration(e, k))?;
        if !grad.g.iter().all(|v| v.is_finite()) {
            return Err(Error::NanGradient { iteration: k });
        }
        records.push(IterationRecord {
            iter: k,
            theta: theta.clone(),
            mean_reward: eval.mean_reward,
            grad_norm: grad.g.norm(),
            rms_error: eval.rms_error,
            clamp_events: eval.clamp_events,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        if k < params.iterations {
            theta += grad.g * params.step_at(k);
        }
    }
    Ok(RunLog {
        final_theta: theta,
        records,
    })
}

fn attach_iteration(e: Error, k: usize) -> Error {
    // Divergence carries the sample index from the batch estimator; wrap it
    // with the iteration it happened in.
    Error::Aborted {
        iteration: k,
        cause: Box::new(e),
    }
}
