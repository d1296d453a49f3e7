//! Experiment configuration files: TOML with `[env]`, `[model]`, `[policy]`,
//! `[reward]`, `[train]`, and optional `[study]` sections plus a mandatory
//! top-level `seed`. Unknown keys are rejected at parse time, and keys that
//! do not belong to the selected `kind` are rejected during validation.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::path::Path;

use crate::diagnostics::{ScalingStudyConfig, StudyInstance};
use crate::dynamics::{CarParams, DynamicsModel};
use crate::error::{Error, Result};
use crate::policy::{
    NeuralTrackingPolicy, Policy, ReferencePath, ReferencePoint, TrackedModel, TrackingPolicy,
    TrackingShape,
};
use crate::reward::RewardFunction;
use crate::trainer::{InitDist, TrainParams};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub env: ModelSection,
    pub model: ModelSection,
    pub policy: PolicySection,
    pub reward: RewardSection,
    pub train: TrainSection,
    #[serde(default)]
    pub study: Option<StudySection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub dt: Option<f64>,
    pub beta_a: Option<f64>,
    pub beta_omega: Option<f64>,
    pub c_v: Option<f64>,
    pub b_omega: Option<f64>,
    /// Mismatch coefficient scaling the four physical parameters.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ScalarLinear,
    KinematicCar,
    Unicycle,
    CarHifi,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: PolicyKind,
    /// Proportional gain of the scalar tracking law.
    pub gain: Option<f64>,
    /// Nominal `[k_v, k_omega]` of the vehicle tracking law.
    pub gains: Option<[f64; 2]>,
    pub c_along: Option<f64>,
    pub c_lateral: Option<f64>,
    pub reference: Option<ReferenceKind>,
    pub diameter: Option<f64>,
    pub lap_time: Option<f64>,
    pub right_first: Option<bool>,
    /// Setpoint reference as `[x, y, heading, speed]`.
    pub setpoint: Option<[f64; 4]>,
    /// Waypoint times (strictly increasing) for the waypoint-table reference.
    pub waypoint_times: Option<Vec<f64>>,
    /// Waypoints as `[x, y, heading, speed]`, one per time.
    pub waypoints: Option<Vec<[f64; 4]>>,
    /// Hidden layer sizes of the correction network.
    pub hidden: Option<Vec<usize>>,
    /// Explicit initial parameters (defaults to the policy's own init).
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    OpenLoop,
    ScalarTracking,
    Tracking,
    NeuralTracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Figure8,
    Setpoint,
    WaypointTable,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    pub kind: RewardKind,
    /// Diagonal of the PSD weight matrix (state layout).
    pub weights: Vec<f64>,
    /// Fixed target when the policy carries no reference path.
    pub setpoint: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    QuadraticTracking,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub horizon: usize,
    pub samples: usize,
    pub iterations: usize,
    pub step_size: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    pub init: InitSection,
}

fn default_decay() -> f64 {
    1.0
}

fn default_eval_samples() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub kind: InitKind,
    pub value: Option<Vec<f64>>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub mean: Option<Vec<f64>>,
    pub std: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Point,
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub horizons: Vec<usize>,
    #[serde(default = "default_study_batch")]
    pub samples: usize,
    #[serde(default = "default_study_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub hessian: bool,
    /// Initial condition for the deterministic bias/Hessian probes; defaults
    /// to the mean of the training init distribution.
    pub bias_x0: Option<Vec<f64>>,
}

fn default_study_batch() -> usize {
    1
}

fn default_study_seeds() -> usize {
    64
}

/// Everything needed to run commands, built and validated from a config.
#[derive(Debug)]
pub struct BuiltExperiment {
    pub seed: u64,
    pub env: DynamicsModel,
    pub model: DynamicsModel,
    pub policy: Policy,
    pub theta0: DVector<f64>,
    pub reward: RewardFunction,
    pub train: TrainParams,
    pub config: ExperimentConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Validate the sections against each other and build runtime objects.
    /// `seed_override` replaces the config seed when given.
    pub fn build(&self, seed_override: Option<u64>) -> Result<BuiltExperiment> {
        let seed = seed_override.unwrap_or(self.seed);
        let env = build_model(&self.env, "env")?;
        let model = build_model(&self.model, "model")?;
        if env.state_dim() != model.state_dim() || env.input_dim() != model.input_dim() {
            return Err(Error::InvalidConfig(
                "env and model dimensions must match".into(),
            ));
        }
        let policy = build_policy(&self.policy, &env, self.train.horizon)?;
        if let Some(n) = policy.state_dim() {
            if n != env.state_dim() {
                return Err(Error::InvalidConfig(format!(
                    "policy expects state dimension {n}, env has {}",
                    env.state_dim()
                )));
            }
        }
        if policy.input_dim() != env.input_dim() {
            return Err(Error::InvalidConfig(format!(
                "policy produces {} inputs, env takes {}",
                policy.input_dim(),
                env.input_dim()
            )));
        }
        let reward = build_reward(&self.reward, &policy, &env, self.train.horizon)?;
        let init = build_init(&self.train.init, env.state_dim())?;
        let theta0 = match &self.policy.theta0 {
            Some(values) => {
                if values.len() != policy.param_count() {
                    return Err(Error::InvalidConfig(format!(
                        "theta0 has {} entries, policy needs {}",
                        values.len(),
                        policy.param_count()
                    )));
                }
                DVector::from_vec(values.clone())
            }
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(theta_seed(seed));
                policy.init_params(&mut rng)
            }
        };
        if self.train.samples < 1 || self.train.iterations < 1 || self.train.horizon < 1 {
            return Err(Error::InvalidConfig(
                "train.horizon, train.samples and train.iterations must be >= 1".into(),
            ));
        }
        if self.train.step_size < 0.0 {
            return Err(Error::InvalidConfig("train.step_size must be >= 0".into()));
        }
        let train = TrainParams {
            horizon: self.train.horizon,
            samples: self.train.samples,
            iterations: self.train.iterations,
            step_size: self.train.step_size,
            decay: self.train.decay,
            seed,
            init,
            eval_samples: self.train.eval_samples,
        };
        Ok(BuiltExperiment {
            seed,
            env,
            model,
            policy,
            theta0,
            reward,
            train,
            config: self.clone(),
        })
    }

    /// Build the scaling-study configuration; requires a `[study]` section
    /// and a per-step-parameterized policy class.
    pub fn build_study(&self, seed_override: Option<u64>) -> Result<ScalingStudyConfig> {
        let built = self.build(seed_override)?;
        let study = self
            .study
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("missing [study] section".into()))?;
        let policy_kind = self.policy.kind;
        if !matches!(policy_kind, PolicyKind::OpenLoop | PolicyKind::ScalarTracking) {
            return Err(Error::InvalidConfig(
                "scaling studies support open_loop and scalar_tracking policies".into(),
            ));
        }
        let gain = self.policy.gain.unwrap_or(0.0);
        let input_dim = built.env.input_dim();
        let reward_section = self.reward.clone();
        let env_for_reward = built.env.clone();
        let bias_x0 = match &study.bias_x0 {
            Some(v) => DVector::from_vec(v.clone()),
            None => built.train.init.mean(),
        };
        if bias_x0.len() != built.env.state_dim() {
            return Err(Error::InvalidConfig(
                "study.bias_x0 dimension does not match the env".into(),
            ));
        }
        Ok(ScalingStudyConfig {
            true_model: built.env.clone(),
            model: built.model.clone(),
            instance: Box::new(move |horizon| {
                let policy = match policy_kind {
                    PolicyKind::OpenLoop => Policy::open_loop(input_dim, horizon),
                    PolicyKind::ScalarTracking => Policy::scalar_tracking(gain, horizon),
                    _ => unreachable!("validated above"),
                };
                // Per-horizon parameter vectors start at zero.
                let theta = DVector::zeros(policy.param_count());
                let reward = build_reward(&reward_section, &policy, &env_for_reward, horizon)
                    .expect("validated at build time");
                StudyInstance {
                    policy,
                    theta,
                    reward,
                }
            }),
            horizons: study.horizons.clone(),
            batch: study.samples,
            seeds: study.seeds,
            seed_base: built.seed,
            init: built.train.init.clone(),
            bias_x0,
            measure_hessian: study.hessian,
        })
    }
}

/// Seed stream for drawing initial policy parameters.
pub fn theta_seed(master: u64) -> u64 {
    master ^ 0xA076_1D64_78BD_642F
}

fn require(value: Option<f64>, key: &str, kind: &str, section: &str) -> Result<f64> {
    value.ok_or_else(|| {
        Error::InvalidConfig(format!("[{section}] kind \"{kind}\" requires key `{key}`"))
    })
}

fn forbid(unused: &[(&Option<f64>, &str)], kind: &str, section: &str) -> Result<()> {
    for (value, key) in unused {
        if value.is_some() {
            return Err(Error::InvalidConfig(format!(
                "[{section}] key `{key}` does not apply to kind \"{kind}\""
            )));
        }
    }
    Ok(())
}

fn build_model(section: &ModelSection, name: &str) -> Result<DynamicsModel> {
    match section.kind {
        ModelKind::ScalarLinear => {
            forbid(
                &[
                    (&section.dt, "dt"),
                    (&section.beta_a, "beta_a"),
                    (&section.beta_omega, "beta_omega"),
                    (&section.c_v, "c_v"),
                    (&section.b_omega, "b_omega"),
                    (&section.gamma, "gamma"),
                ],
                "scalar_linear",
                name,
            )?;
            Ok(DynamicsModel::ScalarLinear {
                a: require(section.a, "a", "scalar_linear", name)?,
                b: require(section.b, "b", "scalar_linear", name)?,
            })
        }
        ModelKind::KinematicCar | ModelKind::Unicycle => {
            let kind = if section.kind == ModelKind::KinematicCar {
                "kinematic_car"
            } else {
                "unicycle"
            };
            forbid(
                &[
                    (&section.a, "a"),
                    (&section.b, "b"),
                    (&section.beta_a, "beta_a"),
                    (&section.beta_omega, "beta_omega"),
                    (&section.c_v, "c_v"),
                    (&section.b_omega, "b_omega"),
                    (&section.gamma, "gamma"),
                ],
                kind,
                name,
            )?;
            let dt = require(section.dt, "dt", kind, name)?;
            if dt <= 0.0 {
                return Err(Error::InvalidConfig(format!("[{name}] dt must be > 0")));
            }
            Ok(if section.kind == ModelKind::KinematicCar {
                DynamicsModel::KinematicCar { dt }
            } else {
                DynamicsModel::Unicycle { dt }
            })
        }
        ModelKind::CarHifi => {
            forbid(&[(&section.a, "a"), (&section.b, "b")], "car_hifi", name)?;
            let dt = require(section.dt, "dt", "car_hifi", name)?;
            if dt <= 0.0 {
                return Err(Error::InvalidConfig(format!("[{name}] dt must be > 0")));
            }
            let defaults = CarParams::default();
            let params = CarParams {
                beta_a: section.beta_a.unwrap_or(defaults.beta_a),
                beta_omega: section.beta_omega.unwrap_or(defaults.beta_omega),
                c_v: section.c_v.unwrap_or(defaults.c_v),
                b_omega: section.b_omega.unwrap_or(defaults.b_omega),
            }
            .scaled(section.gamma.unwrap_or(1.0));
            Ok(DynamicsModel::CarHiFi { dt, params })
        }
    }
}

fn tracked_kind(env: &DynamicsModel) -> Result<TrackedModel> {
    match env {
        DynamicsModel::KinematicCar { .. } | DynamicsModel::CarHiFi { .. } => Ok(TrackedModel::Car),
        DynamicsModel::Unicycle { .. } => Ok(TrackedModel::Unicycle),
        DynamicsModel::ScalarLinear { .. } => Err(Error::InvalidConfig(
            "tracking policies require a vehicle model".into(),
        )),
    }
}

fn build_reference(section: &PolicySection) -> Result<ReferencePath> {
    match section.reference.unwrap_or(ReferenceKind::Figure8) {
        ReferenceKind::Figure8 => Ok(ReferencePath::Figure8 {
            diameter: section.diameter.unwrap_or(3.0),
            lap_time: section.lap_time.unwrap_or(5.5),
            right_first: section.right_first.unwrap_or(false),
        }),
        ReferenceKind::Setpoint => {
            let sp = section.setpoint.ok_or_else(|| {
                Error::InvalidConfig("[policy] setpoint reference requires `setpoint`".into())
            })?;
            Ok(ReferencePath::Setpoint {
                point: ReferencePoint {
                    x: sp[0],
                    y: sp[1],
                    heading: sp[2],
                    speed: sp[3],
                },
            })
        }
        ReferenceKind::WaypointTable => {
            let times = section.waypoint_times.clone().ok_or_else(|| {
                Error::InvalidConfig(
                    "[policy] waypoint_table reference requires `waypoint_times`".into(),
                )
            })?;
            let raw = section.waypoints.clone().ok_or_else(|| {
                Error::InvalidConfig("[policy] waypoint_table reference requires `waypoints`".into())
            })?;
            if times.len() != raw.len() || times.is_empty() {
                return Err(Error::InvalidConfig(
                    "[policy] waypoint_times and waypoints must be non-empty and equal-length"
                        .into(),
                ));
            }
            if !times.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::InvalidConfig(
                    "[policy] waypoint_times must be strictly increasing".into(),
                ));
            }
            let points = raw
                .iter()
                .map(|p| ReferencePoint {
                    x: p[0],
                    y: p[1],
                    heading: p[2],
                    speed: p[3],
                })
                .collect();
            Ok(ReferencePath::WaypointTable { times, points })
        }
    }
}

fn build_tracking(section: &PolicySection, env: &DynamicsModel) -> Result<TrackingPolicy> {
    let gains = section.gains.unwrap_or([0.5, 3.0]);
    if gains[0] <= 0.0 || gains[1] <= 0.0 {
        return Err(Error::InvalidConfig(
            "[policy] nominal gains must be strictly positive".into(),
        ));
    }
    let mut tracking =
        TrackingPolicy::new(tracked_kind(env)?, build_reference(section)?, gains, env.dt());
    tracking.shape = TrackingShape {
        c_along: section.c_along.unwrap_or(1.0),
        c_lateral: section.c_lateral.unwrap_or(0.5),
    };
    Ok(tracking)
}

fn build_policy(section: &PolicySection, env: &DynamicsModel, horizon: usize) -> Result<Policy> {
    match section.kind {
        PolicyKind::OpenLoop => Ok(Policy::open_loop(env.input_dim(), horizon)),
        PolicyKind::ScalarTracking => {
            if env.state_dim() != 1 {
                return Err(Error::InvalidConfig(
                    "scalar_tracking requires a scalar model".into(),
                ));
            }
            let gain = section.gain.ok_or_else(|| {
                Error::InvalidConfig("[policy] scalar_tracking requires key `gain`".into())
            })?;
            Ok(Policy::scalar_tracking(gain, horizon))
        }
        PolicyKind::Tracking => Ok(Policy::Tracking(build_tracking(section, env)?)),
        PolicyKind::NeuralTracking => {
            let base = build_tracking(section, env)?;
            let hidden = section.hidden.clone().unwrap_or_else(|| vec![64, 64]);
            Ok(Policy::NeuralTracking(NeuralTrackingPolicy::new(base, &hidden)))
        }
    }
}

fn build_reward(
    section: &RewardSection,
    policy: &Policy,
    env: &DynamicsModel,
    horizon: usize,
) -> Result<RewardFunction> {
    let RewardKind::QuadraticTracking = section.kind;
    if section.weights.len() != env.state_dim() {
        return Err(Error::InvalidConfig(format!(
            "[reward] weights has {} entries, env state dimension is {}",
            section.weights.len(),
            env.state_dim()
        )));
    }
    if section.weights.iter().any(|w| *w < 0.0) {
        return Err(Error::InvalidConfig(
            "[reward] weights must be non-negative".into(),
        ));
    }
    let weights = DVector::from_vec(section.weights.clone());
    // Tracking policies define the targets through their reference path;
    // otherwise a fixed setpoint (default: origin).
    let base = match policy {
        Policy::Tracking(p) => Some(p),
        Policy::NeuralTracking(p) => Some(&p.base),
        _ => None,
    };
    match base {
        Some(p) => Ok(RewardFunction::from_reference(
            weights, &p.path, p.kind, horizon, p.dt,
        )),
        None => {
            let target = match &section.setpoint {
                Some(t) => {
                    if t.len() != env.state_dim() {
                        return Err(Error::InvalidConfig(
                            "[reward] setpoint dimension does not match the env".into(),
                        ));
                    }
                    DVector::from_vec(t.clone())
                }
                None => DVector::zeros(env.state_dim()),
            };
            Ok(RewardFunction::setpoint(weights, target, horizon))
        }
    }
}

fn build_init(section: &InitSection, state_dim: usize) -> Result<InitDist> {
    let take = |v: &Option<Vec<f64>>, key: &str| -> Result<DVector<f64>> {
        let v = v.as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!("[train.init] kind requires key `{key}`"))
        })?;
        if v.len() != state_dim {
            return Err(Error::InvalidConfig(format!(
                "[train.init] `{key}` has {} entries, env state dimension is {state_dim}",
                v.len()
            )));
        }
        Ok(DVector::from_vec(v.clone()))
    };
    let absent = |v: &Option<Vec<f64>>, key: &str| -> Result<()> {
        if v.is_some() {
            return Err(Error::InvalidConfig(format!(
                "[train.init] key `{key}` does not apply to this kind"
            )));
        }
        Ok(())
    };
    match section.kind {
        InitKind::Point => {
            absent(&section.lo, "lo")?;
            absent(&section.hi, "hi")?;
            absent(&section.mean, "mean")?;
            absent(&section.std, "std")?;
            Ok(InitDist::PointMass(take(&section.value, "value")?))
        }
        InitKind::Uniform => {
            absent(&section.value, "value")?;
            absent(&section.mean, "mean")?;
            absent(&section.std, "std")?;
            Ok(InitDist::UniformBox {
                lo: take(&section.lo, "lo")?,
                hi: take(&section.hi, "hi")?,
            })
        }
        InitKind::Gaussian => {
            absent(&section.value, "value")?;
            absent(&section.lo, "lo")?;
            absent(&section.hi, "hi")?;
            Ok(InitDist::Gaussian {
                mean: take(&section.mean, "mean")?,
                std: take(&section.std, "std")?,
            })
        }
    }
}
