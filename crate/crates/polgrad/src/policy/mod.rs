//! Policy classes: open-loop input sequences, model-designed tracking
//! controllers, and tracking controllers with neural gain/reference
//! corrections. Every class exposes its exact Jacobians with respect to the
//! state (`K_t`) and the flat parameter vector.
//!
//! Policies are immutable value objects; evaluation and Jacobian calls are
//! pure and reentrant.

pub mod mlp;
pub mod reference;
pub mod tracking;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
pub use mlp::MlpNetwork;
pub use reference::{figure8_reference, wrap_angle, ReferencePath, ReferencePoint};
pub use tracking::{tracking_control, TrackedModel, TrackingOutput, TrackingShape};

/// A tracking controller around a reference path with fixed nominal gains.
/// It has no trainable parameters of its own.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingPolicy {
    pub kind: TrackedModel,
    pub path: ReferencePath,
    /// Nominal gains `[k_v, k_omega]`, both strictly positive.
    pub gains: [f64; 2],
    pub shape: TrackingShape,
    /// Seconds per control step; converts step indices to path time.
    pub dt: f64,
}

impl TrackingPolicy {
    pub fn new(kind: TrackedModel, path: ReferencePath, gains: [f64; 2], dt: f64) -> TrackingPolicy {
        assert!(gains[0] > 0.0 && gains[1] > 0.0, "nominal gains must be positive");
        assert!(dt > 0.0);
        TrackingPolicy {
            kind,
            path,
            gains,
            shape: TrackingShape::default(),
            dt,
        }
    }
}

/// A tracking controller whose gains and desired states are corrected by a
/// neural network. The network consumes periodic phase features of the task
/// time concatenated with the state, and emits `[gain corrections; desired
/// state correction]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralTrackingPolicy {
    pub base: TrackingPolicy,
    pub net: MlpNetwork,
}

impl NeuralTrackingPolicy {
    /// Network layout for this model kind: input `[sin, cos, state]`,
    /// output `[dk_v, dk_omega, d(x_des)]`.
    pub fn new(base: TrackingPolicy, hidden: &[usize]) -> NeuralTrackingPolicy {
        let n = base.kind.state_dim();
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(2 + n);
        sizes.extend_from_slice(hidden);
        sizes.push(2 + n);
        NeuralTrackingPolicy {
            base,
            net: MlpNetwork::new(sizes),
        }
    }

    fn features(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        let period = self.base.path.period();
        let phase = 2.0 * std::f64::consts::PI * (t as f64 * self.base.dt) / period;
        let n = x.len();
        let mut input = DVector::zeros(2 + n);
        input[0] = phase.sin();
        input[1] = phase.cos();
        for i in 0..n {
            input[2 + i] = x[i];
        }
        input
    }

    /// Corrected reference point and gains at `(t, x)`.
    fn corrected(&self, theta: &DVector<f64>, t: usize, x: &DVector<f64>) -> Result<(ReferencePoint, f64, f64)> {
        let out = self.net.forward(theta, &self.features(t, x))?;
        let n = self.base.kind.state_dim();
        let point = self.base.path.point_at(t as f64 * self.base.dt);
        let delta = out.rows(2, n).into_owned();
        let point = self.base.kind.shift_point(&point, &delta);
        Ok((point, self.base.gains[0] + out[0], self.base.gains[1] + out[1]))
    }
}

/// A parameterized control law `u_t = pi_t(x_t; theta)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// `theta` holds one input vector per step; the state is ignored.
    OpenLoop { input_dim: usize, horizon: usize },
    /// Scalar proportional law `u = k (xbar_t - x)` whose parameters are the
    /// per-step desired positions `xbar_t`.
    ScalarTracking { gain: f64, horizon: usize },
    /// Fixed tracking controller; no trainable parameters.
    Tracking(TrackingPolicy),
    /// Tracking controller with neural gain/reference corrections; the
    /// parameters are the network weights.
    NeuralTracking(NeuralTrackingPolicy),
}

impl Policy {
    pub fn open_loop(input_dim: usize, horizon: usize) -> Policy {
        Policy::OpenLoop { input_dim, horizon }
    }

    pub fn scalar_tracking(gain: f64, horizon: usize) -> Policy {
        Policy::ScalarTracking { gain, horizon }
    }

    /// Length of the flat parameter vector.
    pub fn param_count(&self) -> usize {
        match self {
            Policy::OpenLoop { input_dim, horizon } => input_dim * horizon,
            Policy::ScalarTracking { horizon, .. } => *horizon,
            Policy::Tracking(_) => 0,
            Policy::NeuralTracking(p) => p.net.param_count(),
        }
    }

    /// Number of input channels this policy produces.
    pub fn input_dim(&self) -> usize {
        match self {
            Policy::OpenLoop { input_dim, .. } => *input_dim,
            Policy::ScalarTracking { .. } => 1,
            Policy::Tracking(p) => p.kind.input_dim(),
            Policy::NeuralTracking(p) => p.base.kind.input_dim(),
        }
    }

    /// State dimension this policy expects.
    pub fn state_dim(&self) -> Option<usize> {
        match self {
            Policy::OpenLoop { .. } => None,
            Policy::ScalarTracking { .. } => Some(1),
            Policy::Tracking(p) => Some(p.kind.state_dim()),
            Policy::NeuralTracking(p) => Some(p.base.kind.state_dim()),
        }
    }

    fn check(&self, theta: &DVector<f64>, t: usize) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "policy parameters",
                expected: self.param_count(),
                actual: theta.len(),
            });
        }
        let horizon = match self {
            Policy::OpenLoop { horizon, .. } | Policy::ScalarTracking { horizon, .. } => Some(*horizon),
            _ => None,
        };
        if let Some(h) = horizon {
            if t >= h {
                return Err(Error::StepOutOfRange { step: t, horizon: h });
            }
        }
        Ok(())
    }

    /// Control input at step `t` in state `x`.
    pub fn eval(&self, theta: &DVector<f64>, t: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(theta, t)?;
        match self {
            Policy::OpenLoop { input_dim, .. } => {
                Ok(theta.rows(t * input_dim, *input_dim).into_owned())
            }
            Policy::ScalarTracking { gain, .. } => {
                Ok(DVector::from_vec(vec![gain * (theta[t] - x[0])]))
            }
            Policy::Tracking(p) => {
                let point = p.path.point_at(t as f64 * p.dt);
                Ok(tracking_control(p.kind, x, &point, p.gains[0], p.gains[1], &p.shape).u)
            }
            Policy::NeuralTracking(p) => {
                let (point, k_v, k_w) = p.corrected(theta, t, x)?;
                Ok(tracking_control(p.base.kind, x, &point, k_v, k_w, &p.base.shape).u)
            }
        }
    }

    /// Exact state Jacobian `K_t = d pi_t / d x`, shape `m x n`.
    pub fn jac_state(&self, theta: &DVector<f64>, t: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(theta, t)?;
        match self {
            Policy::OpenLoop { input_dim, .. } => Ok(DMatrix::zeros(*input_dim, x.len())),
            Policy::ScalarTracking { gain, .. } => Ok(DMatrix::from_element(1, 1, -gain)),
            Policy::Tracking(p) => {
                let point = p.path.point_at(t as f64 * p.dt);
                Ok(tracking_control(p.kind, x, &point, p.gains[0], p.gains[1], &p.shape).du_dx)
            }
            Policy::NeuralTracking(p) => {
                let (point, k_v, k_w) = p.corrected(theta, t, x)?;
                let out = tracking_control(p.base.kind, x, &point, k_v, k_w, &p.base.shape);
                // The state enters directly and through the network
                // corrections; phase features do not depend on the state.
                let n = p.base.kind.state_dim();
                let net_jac = p.net.input_jacobian(theta, &p.features(t, x))?;
                let state_cols = net_jac.columns(2, n).into_owned();
                let dgains_dx = state_cols.rows(0, 2).into_owned();
                let ddes_dx = state_cols.rows(2, n).into_owned();
                Ok(out.du_dx + out.du_ddes * ddes_dx + out.du_dgains * dgains_dx)
            }
        }
    }

    /// Exact parameter Jacobian `d pi_t / d theta` holding `x` fixed, shape
    /// `m x p`. The closed-loop dependence of `x` on `theta` is handled by
    /// the gradient estimators, not here.
    pub fn jac_params(&self, theta: &DVector<f64>, t: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(theta, t)?;
        match self {
            Policy::OpenLoop { input_dim, horizon } => {
                let mut jac = DMatrix::zeros(*input_dim, input_dim * horizon);
                for i in 0..*input_dim {
                    jac[(i, t * input_dim + i)] = 1.0;
                }
                Ok(jac)
            }
            Policy::ScalarTracking { gain, horizon } => {
                let mut jac = DMatrix::zeros(1, *horizon);
                jac[(0, t)] = *gain;
                Ok(jac)
            }
            Policy::Tracking(_) => Ok(DMatrix::zeros(self.input_dim(), 0)),
            Policy::NeuralTracking(p) => {
                let (point, k_v, k_w) = p.corrected(theta, t, x)?;
                let out = tracking_control(p.base.kind, x, &point, k_v, k_w, &p.base.shape);
                let n = p.base.kind.state_dim();
                let net_jac = p.net.param_jacobian(theta, &p.features(t, x))?;
                let dgains_dtheta = net_jac.rows(0, 2).into_owned();
                let ddes_dtheta = net_jac.rows(2, n).into_owned();
                Ok(out.du_ddes * ddes_dtheta + out.du_dgains * dgains_dtheta)
            }
        }
    }

    /// Initial parameter vector. Neural corrections start at zero output, so
    /// training begins exactly at the nominal tracking controller; the other
    /// classes start from zeros.
    pub fn init_params<R: rand::Rng>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            Policy::NeuralTracking(p) => p.net.init_params(rng),
            _ => DVector::zeros(self.param_count()),
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Policy::OpenLoop { .. } => "open_loop",
            Policy::ScalarTracking { .. } => "scalar_tracking",
            Policy::Tracking(_) => "tracking",
            Policy::NeuralTracking(_) => "neural_tracking",
        }
    }
}

/// On-disk checkpoint: a small header describing the policy plus the flat
/// parameter vector. Round-trips bit-exactly through JSON.
///
/// Format (header fields are omitted when they do not apply):
///
/// ```json
/// {
///   "policy": "neural_tracking",
///   "layer_sizes": [6, 64, 64, 6],
///   "nominal_gains": [0.5, 2.5],
///   "theta": [0.0315, -0.0076, ...]
/// }
/// ```
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nominal_gains: Option<[f64; 2]>,
    pub theta: Vec<f64>,
}

impl Checkpoint {
    pub fn new(policy: &Policy, theta: &DVector<f64>) -> Checkpoint {
        Checkpoint {
            policy: policy.kind_name().to_string(),
            layer_sizes: match policy {
                Policy::NeuralTracking(p) => Some(p.net.layer_sizes().to_vec()),
                _ => None,
            },
            nominal_gains: match policy {
                Policy::Tracking(p) => Some(p.gains),
                Policy::NeuralTracking(p) => Some(p.base.gains),
                _ => None,
            },
            theta: theta.iter().copied().collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Io(format!("checkpoint encode: {e}")))?;
        crate::cli::atomic_write(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("checkpoint: {e}")))
    }

    /// Parameters as a vector, validated against the policy.
    pub fn theta_for(&self, policy: &Policy) -> Result<DVector<f64>> {
        if self.theta.len() != policy.param_count() {
            return Err(Error::DimensionMismatch {
                context: "checkpoint parameters",
                expected: policy.param_count(),
                actual: self.theta.len(),
            });
        }
        Ok(DVector::from_vec(self.theta.clone()))
    }
}
