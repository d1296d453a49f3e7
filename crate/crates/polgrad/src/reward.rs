//! Differentiable per-step reward functions of the state.

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

use crate::policy::{ReferencePath, TrackedModel};

/// A custom reward supplies value, gradient, and Hessian at each step.
pub trait RewardSpec: Send + Sync {
    fn reward(&self, t: usize, x: &DVector<f64>) -> f64;
    fn grad(&self, t: usize, x: &DVector<f64>) -> DVector<f64>;
    fn hess(&self, t: usize, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Reward accumulated along a trajectory: `J = sum_{t=0}^{T} R_t(x_t)`.
#[derive(Clone)]
pub enum RewardFunction {
    /// `R_t(x) = -(x - xbar_t)' diag(w) (x - xbar_t)` with `w >= 0`.
    QuadraticTracking {
        /// Diagonal of the PSD weight matrix.
        weights: DVector<f64>,
        /// Targets `xbar_0 .. xbar_T` (length `T + 1`).
        targets: Vec<DVector<f64>>,
    },
    Custom(Arc<dyn RewardSpec>),
}

impl std::fmt::Debug for RewardFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RewardFunction::QuadraticTracking { weights, targets } => f
                .debug_struct("QuadraticTracking")
                .field("weights", weights)
                .field("targets", &targets.len())
                .finish(),
            RewardFunction::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl RewardFunction {
    /// Quadratic tracking toward a fixed target at every step.
    pub fn setpoint(weights: DVector<f64>, target: DVector<f64>, horizon: usize) -> RewardFunction {
        assert!(weights.iter().all(|w| *w >= 0.0), "weights must be PSD");
        RewardFunction::QuadraticTracking {
            weights,
            targets: vec![target; horizon + 1],
        }
    }

    /// Scalar regulation `R(x) = -q x^2` (so `q = 1/2` gives `-x^2/2`).
    pub fn scalar_lq(q: f64, horizon: usize) -> RewardFunction {
        RewardFunction::setpoint(
            DVector::from_vec(vec![q]),
            DVector::zeros(1),
            horizon,
        )
    }

    /// Quadratic tracking of a reference path sampled at `dt` intervals.
    pub fn from_reference(
        weights: DVector<f64>,
        path: &ReferencePath,
        kind: TrackedModel,
        horizon: usize,
        dt: f64,
    ) -> RewardFunction {
        assert_eq!(weights.len(), kind.state_dim());
        let targets = (0..=horizon)
            .map(|t| kind.point_to_state(&path.point_at(t as f64 * dt)))
            .collect();
        RewardFunction::QuadraticTracking { weights, targets }
    }

    pub fn reward(&self, t: usize, x: &DVector<f64>) -> f64 {
        match self {
            RewardFunction::QuadraticTracking { weights, targets } => {
                let e = x - &targets[t.min(targets.len() - 1)];
                -e.iter().zip(weights.iter()).map(|(ei, wi)| wi * ei * ei).sum::<f64>()
            }
            RewardFunction::Custom(spec) => spec.reward(t, x),
        }
    }

    /// `dR_t/dx` as a length-`n` vector.
    pub fn grad(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        match self {
            RewardFunction::QuadraticTracking { weights, targets } => {
                let e = x - &targets[t.min(targets.len() - 1)];
                DVector::from_fn(x.len(), |i, _| -2.0 * weights[i] * e[i])
            }
            RewardFunction::Custom(spec) => spec.grad(t, x),
        }
    }

    /// `d^2 R_t / dx^2`.
    pub fn hess(&self, t: usize, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            RewardFunction::QuadraticTracking { weights, .. } => {
                DMatrix::from_fn(x.len(), x.len(), |i, j| {
                    if i == j {
                        -2.0 * weights[i]
                    } else {
                        0.0
                    }
                })
            }
            RewardFunction::Custom(spec) => spec.hess(t, x),
        }
    }

    /// Target at step `t`, when this reward tracks explicit targets.
    pub fn target(&self, t: usize) -> Option<&DVector<f64>> {
        match self {
            RewardFunction::QuadraticTracking { targets, .. } => {
                Some(&targets[t.min(targets.len() - 1)])
            }
            RewardFunction::Custom(_) => None,
        }
    }
}

/// A reward that is identically zero; useful for isolating estimator terms.
pub struct ZeroReward {
    pub dim: usize,
}

impl RewardSpec for ZeroReward {
    fn reward(&self, _t: usize, _x: &DVector<f64>) -> f64 {
        0.0
    }
    fn grad(&self, _t: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }
    fn hess(&self, _t: usize, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }
}
