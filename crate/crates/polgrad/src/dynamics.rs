//! Discrete-time dynamics models with closed-form Jacobians, and closed-loop
//! rollouts that record the linearizations of both a "true" system and an
//! approximate model along the same real trajectory.
//!
//! All models are explicit-Euler discretizations evaluated exactly as written;
//! there is no sub-stepping. Every operation is a pure function of its
//! arguments, so values can be shared across threads freely.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::policy::Policy;

/// Parameters of the higher-fidelity car model: input scaling, quadratic
/// drag, and steering bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarParams {
    /// Throttle input scaling.
    pub beta_a: f64,
    /// Steering input scaling.
    pub beta_omega: f64,
    /// Quadratic drag coefficient.
    pub c_v: f64,
    /// Steering bias (the car turns even at zero steering command).
    pub b_omega: f64,
}

impl Default for CarParams {
    fn default() -> Self {
        CarParams {
            beta_a: 1.0,
            beta_omega: 1.0,
            c_v: 0.1,
            b_omega: 0.05,
        }
    }
}

impl CarParams {
    /// Scale every parameter by a mismatch coefficient. `gamma = 1` returns
    /// the parameters unchanged, so a model built from `scaled(1.0)` matches
    /// the original exactly.
    pub fn scaled(&self, gamma: f64) -> CarParams {
        CarParams {
            beta_a: gamma * self.beta_a,
            beta_omega: gamma * self.beta_omega,
            c_v: gamma * self.c_v,
            b_omega: gamma * self.b_omega,
        }
    }
}

/// A named analytic dynamical system `x_{t+1} = F(x_t, u_t)`.
///
/// State layouts:
/// - `ScalarLinear`: state `[x]`, input `[u]`, update `a*x + b*u`.
/// - `KinematicCar`: state `[x, y, v, phi]`, input `[a, omega]` with
///   `a in [0,1]`, `omega in [-1,1]`; turn rate scales with speed.
/// - `Unicycle`: state `[x, y, phi]`, input `[v, omega]` (commanded
///   velocities, unbounded); turn rate does not scale with speed.
/// - `CarHiFi`: same layout and bounds as `KinematicCar`, plus input
///   scaling, quadratic drag, and steering bias from [`CarParams`].
#[derive(Debug, Clone, PartialEq)]
pub enum DynamicsModel {
    ScalarLinear { a: f64, b: f64 },
    KinematicCar { dt: f64 },
    Unicycle { dt: f64 },
    CarHiFi { dt: f64, params: CarParams },
}

/// State and input Jacobians of the step map at a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianPair {
    /// `dF/dx`, `n x n`.
    pub a: DMatrix<f64>,
    /// `dF/du`, `n x m`.
    pub b: DMatrix<f64>,
}

impl DynamicsModel {
    pub fn state_dim(&self) -> usize {
        match self {
            DynamicsModel::ScalarLinear { .. } => 1,
            DynamicsModel::KinematicCar { .. } | DynamicsModel::CarHiFi { .. } => 4,
            DynamicsModel::Unicycle { .. } => 3,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            DynamicsModel::ScalarLinear { .. } => 1,
            _ => 2,
        }
    }

    /// Componentwise input bounds, if this model declares any.
    pub fn input_bounds(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            DynamicsModel::KinematicCar { .. } | DynamicsModel::CarHiFi { .. } => {
                Some(vec![(0.0, 1.0), (-1.0, 1.0)])
            }
            _ => None,
        }
    }

    /// Time step of the discretization (1.0 for the scalar system, which is
    /// already a discrete map).
    pub fn dt(&self) -> f64 {
        match self {
            DynamicsModel::ScalarLinear { .. } => 1.0,
            DynamicsModel::KinematicCar { dt }
            | DynamicsModel::Unicycle { dt }
            | DynamicsModel::CarHiFi { dt, .. } => *dt,
        }
    }

    fn check_args(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "dynamics state",
                expected: self.state_dim(),
                actual: x.len(),
            });
        }
        if u.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "dynamics input",
                expected: self.input_dim(),
                actual: u.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dynamics state",
            });
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dynamics input",
            });
        }
        Ok(())
    }

    /// Clamp an input to the model's declared bounds. Returns the applied
    /// input and whether any component changed.
    pub fn clamp_input(&self, u: &DVector<f64>) -> (DVector<f64>, bool) {
        match self.input_bounds() {
            None => (u.clone(), false),
            Some(bounds) => {
                let mut clamped = u.clone();
                let mut changed = false;
                for (i, (lo, hi)) in bounds.iter().enumerate() {
                    let c = clamped[i].clamp(*lo, *hi);
                    if c != clamped[i] {
                        changed = true;
                    }
                    clamped[i] = c;
                }
                (clamped, changed)
            }
        }
    }

    /// One step of the dynamics. Inputs outside declared bounds are clamped
    /// before stepping.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_args(x, u)?;
        let (u, _) = self.clamp_input(u);
        let next = match self {
            DynamicsModel::ScalarLinear { a, b } => DVector::from_vec(vec![a * x[0] + b * u[0]]),
            DynamicsModel::KinematicCar { dt } => {
                let (px, py, v, phi) = (x[0], x[1], x[2], x[3]);
                DVector::from_vec(vec![
                    px + v * phi.cos() * dt,
                    py + v * phi.sin() * dt,
                    v + u[0] * dt,
                    phi + v * u[1] * dt,
                ])
            }
            DynamicsModel::Unicycle { dt } => {
                let (px, py, phi) = (x[0], x[1], x[2]);
                DVector::from_vec(vec![
                    px + u[0] * phi.cos() * dt,
                    py + u[0] * phi.sin() * dt,
                    phi + u[1] * dt,
                ])
            }
            DynamicsModel::CarHiFi { dt, params } => {
                let (px, py, v, phi) = (x[0], x[1], x[2], x[3]);
                DVector::from_vec(vec![
                    px + v * phi.cos() * dt,
                    py + v * phi.sin() * dt,
                    v + (params.beta_a * u[0] - params.c_v * v * v) * dt,
                    phi + (params.beta_omega * u[1] - params.b_omega) * v * dt,
                ])
            }
        };
        Ok(next)
    }

    /// Closed-form Jacobians `A = dF/dx`, `B = dF/du` at `(x, u)`, with the
    /// input clamped to bounds exactly as in [`DynamicsModel::step`].
    pub fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<JacobianPair> {
        self.check_args(x, u)?;
        let (u, _) = self.clamp_input(u);
        let pair = match self {
            DynamicsModel::ScalarLinear { a, b } => JacobianPair {
                a: DMatrix::from_element(1, 1, *a),
                b: DMatrix::from_element(1, 1, *b),
            },
            DynamicsModel::KinematicCar { dt } => {
                let (v, phi) = (x[2], x[3]);
                let mut a = DMatrix::identity(4, 4);
                a[(0, 2)] = phi.cos() * dt;
                a[(0, 3)] = -v * phi.sin() * dt;
                a[(1, 2)] = phi.sin() * dt;
                a[(1, 3)] = v * phi.cos() * dt;
                a[(3, 2)] = u[1] * dt;
                let mut b = DMatrix::zeros(4, 2);
                b[(2, 0)] = *dt;
                b[(3, 1)] = v * dt;
                JacobianPair { a, b }
            }
            DynamicsModel::Unicycle { dt } => {
                let phi = x[2];
                let mut a = DMatrix::identity(3, 3);
                a[(0, 2)] = -u[0] * phi.sin() * dt;
                a[(1, 2)] = u[0] * phi.cos() * dt;
                let mut b = DMatrix::zeros(3, 2);
                b[(0, 0)] = phi.cos() * dt;
                b[(1, 0)] = phi.sin() * dt;
                b[(2, 1)] = *dt;
                JacobianPair { a, b }
            }
            DynamicsModel::CarHiFi { dt, params } => {
                let (v, phi) = (x[2], x[3]);
                let mut a = DMatrix::identity(4, 4);
                a[(0, 2)] = phi.cos() * dt;
                a[(0, 3)] = -v * phi.sin() * dt;
                a[(1, 2)] = phi.sin() * dt;
                a[(1, 3)] = v * phi.cos() * dt;
                a[(2, 2)] = 1.0 - 2.0 * params.c_v * v * dt;
                a[(3, 2)] = (params.beta_omega * u[1] - params.b_omega) * dt;
                let mut b = DMatrix::zeros(4, 2);
                b[(2, 0)] = params.beta_a * dt;
                b[(3, 1)] = params.beta_omega * v * dt;
                JacobianPair { a, b }
            }
        };
        Ok(pair)
    }
}

/// A closed-loop rollout on the true system, carrying the linearizations of
/// both the true system and an approximate model along the same trajectory,
/// plus the policy's state Jacobians `K_t`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// States `x_0 .. x_T` (length `T + 1`).
    pub states: Vec<DVector<f64>>,
    /// Raw policy outputs `u_0 .. u_{T-1}` before clamping (length `T`).
    pub inputs: Vec<DVector<f64>>,
    /// Linearizations of the true system at each `(x_t, u_t)`.
    pub true_jac: Vec<JacobianPair>,
    /// Linearizations of the approximate model at the same points.
    pub model_jac: Vec<JacobianPair>,
    /// Policy state Jacobians `K_t` (`m x n`, length `T`).
    pub policy_state_jac: Vec<DMatrix<f64>>,
    /// Whether the applied input differed from the policy output at step `t`.
    pub clamped: Vec<bool>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    /// Number of steps where input clamping was active. Gradients assume the
    /// applied input equals the policy output, so a nonzero count means the
    /// parameter Jacobians are unreliable at those steps.
    pub fn clamp_events(&self) -> usize {
        self.clamped.iter().filter(|c| **c).count()
    }
}

/// Roll the policy out on `true_model` for `horizon` steps from `x0`,
/// recording Jacobians of both `true_model` and `model` along the way.
pub fn rollout(
    true_model: &DynamicsModel,
    model: &DynamicsModel,
    policy: &Policy,
    theta: &DVector<f64>,
    x0: &DVector<f64>,
    horizon: usize,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let mut true_jac = Vec::with_capacity(horizon);
    let mut model_jac = Vec::with_capacity(horizon);
    let mut policy_state_jac = Vec::with_capacity(horizon);
    let mut clamped = Vec::with_capacity(horizon);

    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "rollout initial state",
        });
    }
    let mut x = x0.clone();
    states.push(x.clone());
    for t in 0..horizon {
        let u = policy.eval(theta, t, &x)?;
        let (_, was_clamped) = true_model.clamp_input(&u);
        true_jac.push(true_model.jacobians(&x, &u)?);
        model_jac.push(model.jacobians(&x, &u)?);
        policy_state_jac.push(policy.jac_state(theta, t, &x)?);
        let next = true_model.step(&x, &u)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                step: t + 1,
                sample: None,
            });
        }
        inputs.push(u);
        clamped.push(was_clamped);
        x = next;
        states.push(x.clone());
    }

    Ok(Trajectory {
        states,
        inputs,
        true_jac,
        model_jac,
        policy_state_jac,
        clamped,
    })
}
