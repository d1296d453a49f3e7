//! Policy gradient estimators along real trajectories.
//!
//! The gradient of the accumulated reward with respect to the policy
//! parameters is assembled from per-step linearizations. Two algebraically
//! equivalent forms are provided: a forward sensitivity recursion that
//! materializes `d x_t / d theta`, and a backward costate recursion that
//! runs in `O(T (n^2 + n p))` without storing any sensitivity matrices.
//! Either form can consume the Jacobians of the true system or of an
//! approximate model; substituting model Jacobians is the only source of
//! estimation bias. A central-difference estimator of the true objective
//! serves as an independent oracle.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{rollout, DynamicsModel, Trajectory};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::reward::RewardFunction;
use crate::trainer::{sample_initial_conditions, InitDist};

/// Which linearization a computation should read from the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianSource {
    True,
    Model,
}

/// How a gradient estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorForm {
    Forward,
    Backward,
    FiniteDifference,
}

/// Provenance of a gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateMeta {
    pub form: EstimatorForm,
    pub jacobians: JacobianSource,
    pub horizon: usize,
    pub batch_size: usize,
    pub seed: Option<u64>,
}

/// A flat parameter-space gradient with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub g: DVector<f64>,
    pub meta: EstimateMeta,
}

/// Per-step sensitivities `d x_t / d theta` for `t = 0..T`, each `n x p`.
#[derive(Debug, Clone)]
pub struct SensitivitySequence(pub Vec<DMatrix<f64>>);

impl SensitivitySequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn jac_at(traj: &Trajectory, source: JacobianSource, t: usize) -> (&DMatrix<f64>, &DMatrix<f64>) {
    match source {
        JacobianSource::True => (&traj.true_jac[t].a, &traj.true_jac[t].b),
        JacobianSource::Model => (&traj.model_jac[t].a, &traj.model_jac[t].b),
    }
}

/// Propagate parameter sensitivities forward along the trajectory:
/// `S_{t+1} = (A_t + B_t K_t) S_t + B_t (d pi_t / d theta)`, `S_0 = 0`.
pub fn sensitivities_forward(
    traj: &Trajectory,
    source: JacobianSource,
    policy: &Policy,
    theta: &DVector<f64>,
) -> Result<SensitivitySequence> {
    let horizon = traj.horizon();
    let n = traj.states[0].len();
    let p = policy.param_count();
    let mut seq = Vec::with_capacity(horizon + 1);
    seq.push(DMatrix::zeros(n, p));
    for t in 0..horizon {
        let (a, b) = jac_at(traj, source, t);
        let k = &traj.policy_state_jac[t];
        let a_cl = a + b * k;
        let dpi = policy.jac_params(theta, t, &traj.states[t])?;
        let next = &a_cl * &seq[t] + b * dpi;
        seq.push(next);
    }
    Ok(SensitivitySequence(seq))
}

/// Assemble the gradient from precomputed sensitivities:
/// `g = sum_t (dR_t/dx)(x_t) S_t`.
pub fn gradient_forward(
    traj: &Trajectory,
    reward: &RewardFunction,
    sens: &SensitivitySequence,
    source: JacobianSource,
) -> GradientEstimate {
    let horizon = traj.horizon();
    assert_eq!(sens.len(), horizon + 1, "sensitivities must cover the rollout");
    let p = sens.0[0].ncols();
    let mut g = DVector::zeros(p);
    for t in 0..=horizon {
        let grad_r = reward.grad(t, &traj.states[t]);
        g += sens.0[t].transpose() * grad_r;
    }
    GradientEstimate {
        g,
        meta: EstimateMeta {
            form: EstimatorForm::Forward,
            jacobians: source,
            horizon,
            batch_size: 1,
            seed: None,
        },
    }
}

/// Backward costate form of the same gradient:
/// `p_T = dR_T/dx`, `p_t = p_{t+1} (A_t + B_t K_t) + dR_t/dx`,
/// `g = sum_t (p_{t+1} B_t) (d pi_t / d theta)`.
///
/// No sensitivity or transition matrices are materialized.
pub fn gradient_backward(
    traj: &Trajectory,
    source: JacobianSource,
    policy: &Policy,
    theta: &DVector<f64>,
    reward: &RewardFunction,
) -> Result<GradientEstimate> {
    let horizon = traj.horizon();
    let p = policy.param_count();
    let mut g = DVector::zeros(p);
    // Costate as a row vector, kept transposed for convenience.
    let mut costate = reward.grad(horizon, &traj.states[horizon]);
    for t in (0..horizon).rev() {
        let (a, b) = jac_at(traj, source, t);
        let k = &traj.policy_state_jac[t];
        let dpi = policy.jac_params(theta, t, &traj.states[t])?;
        // (p_{t+1} B_t) * dpi/dtheta, accumulated into g.
        let pb = b.transpose() * &costate;
        g += dpi.transpose() * pb;
        let a_cl = a + b * k;
        costate = a_cl.transpose() * costate + reward.grad(t, &traj.states[t]);
    }
    Ok(GradientEstimate {
        g,
        meta: EstimateMeta {
            form: EstimatorForm::Backward,
            jacobians: source,
            horizon,
            batch_size: 1,
            seed: None,
        },
    })
}

/// Roll out on the true system and differentiate with the model's Jacobians
/// (backward form). This is the single-sample estimate behind the batch
/// estimator.
pub fn model_gradient(
    true_model: &DynamicsModel,
    model: &DynamicsModel,
    policy: &Policy,
    theta: &DVector<f64>,
    reward: &RewardFunction,
    x0: &DVector<f64>,
    horizon: usize,
) -> Result<GradientEstimate> {
    let traj = rollout(true_model, model, policy, theta, x0, horizon)?;
    gradient_backward(&traj, JacobianSource::Model, policy, theta, reward)
}

/// Batch estimate from explicitly provided initial conditions: the mean of
/// the per-sample model-based gradients, reduced in sample order so the
/// result does not depend on scheduling.
pub fn batch_gradient_from_states(
    true_model: &DynamicsModel,
    model: &DynamicsModel,
    policy: &Policy,
    theta: &DVector<f64>,
    reward: &RewardFunction,
    horizon: usize,
    initial_states: &[DVector<f64>],
) -> Result<GradientEstimate> {
    assert!(!initial_states.is_empty(), "batch estimate needs at least one sample");
    let per_sample: Vec<Result<DVector<f64>>> = initial_states
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            model_gradient(true_model, model, policy, theta, reward, x0, horizon)
                .map(|e| e.g)
                .map_err(|e| match e {
                    Error::Diverged { step, .. } => Error::Diverged {
                        step,
                        sample: Some(i),
                    },
                    other => other,
                })
        })
        .collect();
    let mut sum = DVector::zeros(policy.param_count());
    for g in per_sample {
        sum += g?;
    }
    Ok(GradientEstimate {
        g: sum / initial_states.len() as f64,
        meta: EstimateMeta {
            form: EstimatorForm::Backward,
            jacobians: JacobianSource::Model,
            horizon,
            batch_size: initial_states.len(),
            seed: None,
        },
    })
}

/// Batch estimate over `n` initial conditions drawn i.i.d. from `init` with
/// a seeded generator; deterministic given the seed.
#[allow(clippy::too_many_arguments)]
pub fn batch_gradient(
    true_model: &DynamicsModel,
    model: &DynamicsModel,
    policy: &Policy,
    theta: &DVector<f64>,
    reward: &RewardFunction,
    horizon: usize,
    init: &InitDist,
    n: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    assert!(n >= 1);
    let samples = sample_initial_conditions(init, n, seed);
    let mut estimate = batch_gradient_from_states(
        true_model, model, policy, theta, reward, horizon, &samples,
    )?;
    estimate.meta.seed = Some(seed);
    Ok(estimate)
}

/// Total reward of a rollout on the true system.
pub fn objective(
    true_model: &DynamicsModel,
    policy: &Policy,
    theta: &DVector<f64>,
    reward: &RewardFunction,
    x0: &DVector<f64>,
    horizon: usize,
) -> Result<f64> {
    let traj = rollout(true_model, true_model, policy, theta, x0, horizon)?;
    Ok((0..=horizon).map(|t| reward.reward(t, &traj.states[t])).sum())
}

/// Central finite differences of the rollout objective, componentwise, with
/// per-component step `h * max(1, |theta_i|)`. Independent of every analytic
/// derivative path above.
pub fn finite_difference_gradient(
    true_model: &DynamicsModel,
    policy: &Policy,
    theta: &DVector<f64>,
    reward: &RewardFunction,
    x0: &DVector<f64>,
    horizon: usize,
    h: f64,
) -> Result<GradientEstimate> {
    assert!(h > 0.0);
    let p = policy.param_count();
    let mut g = DVector::zeros(p);
    for i in 0..p {
        let step = h * theta[i].abs().max(1.0);
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[i] += step;
        tm[i] -= step;
        let jp = objective(true_model, policy, &tp, reward, x0, horizon)?;
        let jm = objective(true_model, policy, &tm, reward, x0, horizon)?;
        g[i] = (jp - jm) / (2.0 * step);
    }
    Ok(GradientEstimate {
        g,
        meta: EstimateMeta {
            form: EstimatorForm::FiniteDifference,
            jacobians: JacobianSource::True,
            horizon,
            batch_size: 1,
            seed: None,
        },
    })
}

/// Relative difference between two gradients: `||a - b|| / max(||a||, ||b||)`,
/// zero when both are empty or zero.
pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}
