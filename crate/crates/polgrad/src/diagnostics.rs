//! Analysis machinery for long-horizon gradient pathologies: state
//! transition matrices, the decomposition of sensitivity-propagation error
//! into input-channel and state-channel terms, Hessian estimates with
//! condition numbers, and horizon scaling studies that classify growth as
//! exponential or polynomial.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{rollout, DynamicsModel, JacobianPair, Trajectory};
use crate::error::{Error, Result};
use crate::estimator::{
    batch_gradient, gradient_backward, gradient_forward, sensitivities_forward, JacobianSource,
};
use crate::policy::Policy;
use crate::reward::RewardFunction;
use crate::trainer::InitDist;

/// All transition matrices `Phi[t][t']` for `0 <= t' < t <= T`, built from a
/// closed-loop Jacobian sequence by the semigroup recursion
/// `Phi_{t'+1,t'} = I`, `Phi_{t,t'} = A_{t-1} Phi_{t-1,t'}`.
///
/// `Phi_{t,t'}` is the ordered product `A_{t-1} ... A_{t'+1}` (empty product
/// is the identity): it propagates a perturbation injected through the input
/// channel at time `t'` to the state at time `t`.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    n: usize,
    horizon: usize,
    // phi[t - 1][t'] holds Phi_{t, t'} for t' < t.
    phi: Vec<Vec<DMatrix<f64>>>,
}

impl TransitionTable {
    #[allow(clippy::needless_range_loop)]
    pub fn new(closed_loop: &[DMatrix<f64>]) -> TransitionTable {
        let horizon = closed_loop.len();
        let n = if horizon == 0 { 0 } else { closed_loop[0].nrows() };
        let mut phi: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            let mut row = Vec::with_capacity(t);
            for tp in 0..t {
                let m = if t == tp + 1 {
                    DMatrix::identity(n, n)
                } else {
                    &closed_loop[t - 1] * &phi[t - 2][tp]
                };
                row.push(m);
            }
            phi.push(row);
        }
        TransitionTable { n, horizon, phi }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    /// `Phi_{t,t'}`; requires `t' < t <= T`.
    pub fn get(&self, t: usize, tp: usize) -> &DMatrix<f64> {
        assert!(tp < t && t <= self.horizon, "need t' < t <= horizon");
        &self.phi[t - 1][tp]
    }
}

/// Closed-loop Jacobians `A_t + B_t K_t` read off a trajectory.
pub fn closed_loop_jacobians(traj: &Trajectory, source: JacobianSource) -> Vec<DMatrix<f64>> {
    (0..traj.horizon())
        .map(|t| {
            let pair = match source {
                JacobianSource::True => &traj.true_jac[t],
                JacobianSource::Model => &traj.model_jac[t],
            };
            &pair.a + &pair.b * &traj.policy_state_jac[t]
        })
        .collect()
}

/// One `(t, t')` entry of the propagation-error decomposition.
#[derive(Debug, Clone)]
pub struct DecompositionEntry {
    pub t: usize,
    pub tp: usize,
    /// `Phihat_{t,t'} Bhat_{t'} - Phi_{t,t'} B_{t'}`, computed directly.
    pub lhs: DMatrix<f64>,
    /// Input-channel term `Phi_{t,t'} (Bhat_{t'} - B_{t'})`.
    pub term_b: DMatrix<f64>,
    /// State-channel term `(sum_s Phi_{t,s} dA_s Phihat_{s,t'}) Bhat_{t'}`.
    pub term_a: DMatrix<f64>,
    /// `lhs - term_b - term_a`; zero up to rounding.
    pub residual: DMatrix<f64>,
}

/// Exact decomposition of the model-vs-true sensitivity propagation error
/// over every `(t, t')` pair.
#[derive(Debug, Clone)]
pub struct ErrorDecomposition {
    pub entries: Vec<DecompositionEntry>,
    /// Largest matrix magnitude among the compared products; residuals are
    /// judged relative to this.
    pub scale: f64,
}

impl ErrorDecomposition {
    pub fn max_residual(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.residual.amax())
            .fold(0.0, f64::max)
    }

    pub fn entry(&self, t: usize, tp: usize) -> Option<&DecompositionEntry> {
        self.entries.iter().find(|e| e.t == t && e.tp == tp)
    }
}

/// Split `Phihat_{t,t'} Bhat_{t'} - Phi_{t,t'} B_{t'}` into the
/// input-channel error magnified by the true propagator plus the per-step
/// state-channel errors magnified by mixed true/model propagators:
///
/// `lhs = Phi_{t,t'} dB_{t'}
///      + (sum_{s=t'+1}^{t-1} Phi_{t,s} dA^cl_s Phihat_{s,t'}) Bhat_{t'}`
///
/// where `dA^cl_s` and `dB_s` are the pointwise closed-loop Jacobian errors.
/// The index placement is the one under which the identity holds exactly
/// (telescoping the hat/no-hat products one factor at a time); the residual
/// is returned so tests can verify it vanishes.
pub fn error_decomposition(
    true_jacs: &[JacobianPair],
    model_jacs: &[JacobianPair],
    k_seq: &[DMatrix<f64>],
) -> ErrorDecomposition {
    assert_eq!(true_jacs.len(), model_jacs.len());
    assert_eq!(true_jacs.len(), k_seq.len());
    let horizon = true_jacs.len();

    let a_cl: Vec<DMatrix<f64>> = (0..horizon)
        .map(|t| &true_jacs[t].a + &true_jacs[t].b * &k_seq[t])
        .collect();
    let a_cl_hat: Vec<DMatrix<f64>> = (0..horizon)
        .map(|t| &model_jacs[t].a + &model_jacs[t].b * &k_seq[t])
        .collect();
    let phi = TransitionTable::new(&a_cl);
    let phi_hat = TransitionTable::new(&a_cl_hat);

    let mut entries = Vec::new();
    let mut scale = 0.0_f64;
    for t in 1..=horizon {
        for tp in 0..t {
            let true_prod = phi.get(t, tp) * &true_jacs[tp].b;
            let model_prod = phi_hat.get(t, tp) * &model_jacs[tp].b;
            scale = scale.max(true_prod.amax()).max(model_prod.amax());
            let lhs = &model_prod - &true_prod;
            let term_b = phi.get(t, tp) * (&model_jacs[tp].b - &true_jacs[tp].b);
            let n = true_jacs[0].a.nrows();
            let mut delta_phi = DMatrix::zeros(n, n);
            for s in (tp + 1)..t {
                delta_phi += phi.get(t, s) * (&a_cl_hat[s] - &a_cl[s]) * phi_hat.get(s, tp);
            }
            let term_a = delta_phi * &model_jacs[tp].b;
            let residual = &lhs - &term_b - &term_a;
            entries.push(DecompositionEntry {
                t,
                tp,
                lhs,
                term_b,
                term_a,
                residual,
            });
        }
    }
    ErrorDecomposition {
        entries,
        scale: scale.max(1e-300),
    }
}

/// How a Hessian estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMethod {
    /// Central differences of the analytic gradient.
    FiniteDifference,
    /// Closed-form reference for the scalar linear-quadratic instance.
    AnalyticScalarLq,
}

/// A symmetric Hessian with its spectral norm and condition number.
#[derive(Debug, Clone)]
pub struct HessianEstimate {
    pub h: DMatrix<f64>,
    pub method: HessianMethod,
    pub spectral_norm: f64,
    /// `|lambda|_max / |lambda|_min`; infinite for singular matrices.
    pub condition_number: f64,
    /// Eigenvalues treated as numerically zero when computing the condition
    /// number.
    pub zero_eigenvalues: usize,
    /// Worst asymmetry observed before symmetrization.
    pub asymmetry: f64,
}

fn finish_hessian(h: DMatrix<f64>, method: HessianMethod) -> HessianEstimate {
    let asymmetry = (&h - h.transpose()).amax();
    let h = (&h + &h.transpose()) / 2.0;
    let spectral = spectral_norm(&h);
    let eigen = h.clone().symmetric_eigen();
    let max_abs = eigen.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    // Eigenvalues below solver rounding are structural zeros; anything above
    // is a genuine (possibly huge) conditioning measurement.
    let zero_tol = 1e-14 * max_abs.max(1e-300);
    let zero_eigenvalues = eigen
        .eigenvalues
        .iter()
        .filter(|l| l.abs() <= zero_tol)
        .count();
    let condition_number = if zero_eigenvalues > 0 || max_abs == 0.0 {
        f64::INFINITY
    } else {
        let min_abs = eigen
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, l| m.min(l.abs()));
        max_abs / min_abs
    };
    HessianEstimate {
        h,
        method,
        spectral_norm: spectral,
        condition_number,
        zero_eigenvalues,
        asymmetry,
    }
}

/// Hessian of the rollout objective by central differences of the analytic
/// (backward-form, true-Jacobian) gradient: one gradient pair per parameter,
/// `O(p)` rollouts. Symmetrized; the pre-symmetrization defect is recorded.
pub fn hessian_fd(
    true_model: &DynamicsModel,
    policy: &Policy,
    theta: &DVector<f64>,
    reward: &RewardFunction,
    x0: &DVector<f64>,
    horizon: usize,
) -> Result<HessianEstimate> {
    let p = policy.param_count();
    let columns: Vec<Result<DVector<f64>>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let h = 1e-5 * theta[i].abs().max(1.0);
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let gp = analytic_gradient(true_model, policy, &tp, reward, x0, horizon)?;
            let gm = analytic_gradient(true_model, policy, &tm, reward, x0, horizon)?;
            Ok((gp - gm) / (2.0 * h))
        })
        .collect();
    let mut h = DMatrix::zeros(p, p);
    for (i, col) in columns.into_iter().enumerate() {
        h.set_column(i, &col?);
    }
    Ok(finish_hessian(h, HessianMethod::FiniteDifference))
}

fn analytic_gradient(
    true_model: &DynamicsModel,
    policy: &Policy,
    theta: &DVector<f64>,
    reward: &RewardFunction,
    x0: &DVector<f64>,
    horizon: usize,
) -> Result<DVector<f64>> {
    let traj = rollout(true_model, true_model, policy, theta, x0, horizon)?;
    Ok(gradient_backward(&traj, JacobianSource::True, policy, theta, reward)?.g)
}

/// Closed-form diagonal reference for the scalar linear-quadratic instance
/// under a proportional feedback gain `k` (`k = 0` is the open-loop case).
#[derive(Debug, Clone)]
pub struct ScalarLqHessian {
    pub deltas: Vec<f64>,
    pub condition_number: f64,
}

/// `Delta_t = q * sum_{s=t+1}^{T} (a - b k)^{s-t} * b` for `t = 0..T-1`,
/// with condition number `Delta_0 / Delta_{T-1}`.
///
/// This is a reference *curve* for how curvature concentrates at early
/// parameters and how feedback flattens it (geometric growth open loop,
/// bounded under a stabilizing gain). Its normalization differs from the
/// finite-difference Hessian of the quadratic rollout objective, whose
/// entries are products of two sensitivity factors; see the diagnostics
/// documentation of the two curves in the scaling CSV.
pub fn hessian_scalar_lq(a: f64, b: f64, k: f64, q: f64, horizon: usize) -> ScalarLqHessian {
    assert!(horizon >= 1 && q > 0.0);
    let a_cl = a - b * k;
    let deltas: Vec<f64> = (0..horizon)
        .map(|t| {
            let mut sum = 0.0;
            for s in (t + 1)..=horizon {
                sum += a_cl.powi((s - t) as i32) * b;
            }
            q * sum
        })
        .collect();
    let condition_number = deltas[0] / deltas[horizon - 1];
    ScalarLqHessian {
        deltas,
        condition_number,
    }
}

/// Induced 2-norm via power iteration on `H' H` (deterministic start vector;
/// converges to the largest singular value).
pub fn spectral_norm(h: &DMatrix<f64>) -> f64 {
    let n = h.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * (i as f64 + 1.0));
    v /= v.norm();
    let mut sigma = 0.0_f64;
    for _ in 0..10_000 {
        let w = h * &v;
        let z = h.transpose() * w;
        let norm = z.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = z / norm;
        let sigma_next = (h * &next).norm();
        let done = (sigma_next - sigma).abs() <= 1e-14 * sigma_next.max(1e-300);
        v = next;
        sigma = sigma_next;
        if done {
            break;
        }
    }
    sigma
}

/// Growth-regime label assigned by comparing log-linear and log-log fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Exponential,
    Polynomial,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Exponential => f.write_str("exponential"),
            Regime::Polynomial => f.write_str("polynomial"),
        }
    }
}

/// Least-squares fits of `log q` against `T` (exponential regime; the slope
/// estimates the log growth rate) and against `log T` (polynomial regime;
/// the slope estimates the degree).
#[derive(Debug, Clone)]
pub struct RegimeFit {
    pub exp_slope: f64,
    pub exp_intercept: f64,
    pub exp_r2: f64,
    pub poly_slope: f64,
    pub poly_intercept: f64,
    pub poly_r2: f64,
    pub regime: Regime,
    /// Residual sum of squares of the preferred fit.
    pub residual: f64,
}

/// R^2 advantage required before growth is labeled exponential.
const REGIME_R2_MARGIN: f64 = 0.05;

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let r2 = if ss_tot > 1e-300 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-300 {
        1.0
    } else {
        0.0
    };
    (slope, intercept, r2, ss_res)
}

/// Fit both regressions to `(T, quantity)` pairs and label the regime.
pub fn fit_regimes(horizons: &[usize], quantities: &[f64]) -> RegimeFit {
    assert_eq!(horizons.len(), quantities.len());
    let logs: Vec<f64> = quantities.iter().map(|q| q.max(1e-300).ln()).collect();
    let ts: Vec<f64> = horizons.iter().map(|t| *t as f64).collect();
    let log_ts: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let (exp_slope, exp_intercept, exp_r2, exp_res) = linear_fit(&ts, &logs);
    let (poly_slope, poly_intercept, poly_r2, poly_res) = linear_fit(&log_ts, &logs);
    let regime = if exp_r2 >= poly_r2 + REGIME_R2_MARGIN {
        Regime::Exponential
    } else {
        Regime::Polynomial
    };
    let residual = match regime {
        Regime::Exponential => exp_res,
        Regime::Polynomial => poly_res,
    };
    RegimeFit {
        exp_slope,
        exp_intercept,
        exp_r2,
        poly_slope,
        poly_intercept,
        poly_r2,
        regime,
        residual,
    }
}

/// Problem instance used by the scaling study at one horizon.
pub struct StudyInstance {
    pub policy: Policy,
    pub theta: DVector<f64>,
    pub reward: RewardFunction,
}

/// Configuration of a horizon scaling study.
pub struct ScalingStudyConfig {
    pub true_model: DynamicsModel,
    pub model: DynamicsModel,
    /// Builds the per-horizon policy/parameters/reward (per-step parameter
    /// vectors grow with the horizon).
    pub instance: Box<dyn Fn(usize) -> StudyInstance + Sync>,
    /// Strictly increasing, at least 5 values.
    pub horizons: Vec<usize>,
    /// Batch size of each gradient estimate in the variance ensemble.
    pub batch: usize,
    /// Ensemble size for the variance estimate.
    pub seeds: usize,
    pub seed_base: u64,
    pub init: InitDist,
    /// Deterministic initial condition for the bias and Hessian probes.
    pub bias_x0: DVector<f64>,
    pub measure_hessian: bool,
}

/// Per-horizon measurements.
#[derive(Debug, Clone)]
pub struct HorizonMeasurement {
    pub horizon: usize,
    /// `|| g_true - g_model ||` at `bias_x0` (forward form on true Jacobians
    /// versus backward form on model Jacobians, same trajectory).
    pub bias_norm: f64,
    /// Trace of the empirical covariance of the batch estimate over the seed
    /// ensemble.
    pub variance: f64,
    /// Squared deviations `||g_s - mean||^2` per seed.
    pub per_seed_sq_dev: Vec<f64>,
    /// Spectral norm of the finite-difference Hessian, when measured.
    pub hessian_norm: Option<f64>,
}

/// Results plus fitted growth regimes.
pub struct ScalingStudyResult {
    pub rows: Vec<HorizonMeasurement>,
    pub bias_fit: RegimeFit,
    pub variance_fit: RegimeFit,
    pub hessian_fit: Option<RegimeFit>,
    /// Set when rollouts diverged at some horizon; measurements stop at the
    /// last finite horizon.
    pub truncated_at: Option<usize>,
}

/// Measure gradient bias, estimator variance, and Hessian norm at each
/// horizon, then fit growth regimes. Horizons where rollouts diverge
/// truncate the study (recorded in `truncated_at`).
pub fn scaling_study(cfg: &ScalingStudyConfig) -> Result<ScalingStudyResult> {
    if cfg.horizons.len() < 5 {
        return Err(Error::InvalidConfig(format!(
            "scaling study needs at least 5 horizons, got {}",
            cfg.horizons.len()
        )));
    }
    if !cfg.horizons.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidConfig(
            "scaling study horizons must be strictly increasing".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut truncated_at = None;
    for &horizon in &cfg.horizons {
        let StudyInstance {
            policy,
            theta,
            reward,
        } = (cfg.instance)(horizon);

        // Bias probe at the deterministic initial condition.
        let traj = match rollout(
            &cfg.true_model,
            &cfg.model,
            &policy,
            &theta,
            &cfg.bias_x0,
            horizon,
        ) {
            Ok(t) => t,
            Err(Error::Diverged { .. }) => {
                truncated_at = Some(horizon);
                break;
            }
            Err(e) => return Err(e),
        };
        let sens = sensitivities_forward(&traj, JacobianSource::True, &policy, &theta)?;
        let g_true = gradient_forward(&traj, &reward, &sens, JacobianSource::True);
        let g_model = gradient_backward(&traj, JacobianSource::Model, &policy, &theta, &reward)?;
        let bias_norm = (&g_true.g - &g_model.g).norm();

        // Variance over the seed ensemble.
        let estimates: Vec<Result<DVector<f64>>> = (0..cfg.seeds)
            .into_par_iter()
            .map(|s| {
                batch_gradient(
                    &cfg.true_model,
                    &cfg.model,
                    &policy,
                    &theta,
                    &reward,
                    horizon,
                    &cfg.init,
                    cfg.batch,
                    cfg.seed_base
                        .wrapping_add((s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                )
                .map(|e| e.g)
            })
            .collect();
        let mut ensemble = Vec::with_capacity(cfg.seeds);
        let mut diverged = false;
        for e in estimates {
            match e {
                Ok(g) => ensemble.push(g),
                Err(Error::Diverged { .. }) => {
                    diverged = true;
                    break;
                }
                Err(other) => return Err(other),
            }
        }
        if diverged {
            truncated_at = Some(horizon);
            break;
        }
        let mean = ensemble
            .iter()
            .fold(DVector::zeros(policy.param_count()), |acc, g| acc + g)
            / ensemble.len() as f64;
        let per_seed_sq_dev: Vec<f64> =
            ensemble.iter().map(|g| (g - &mean).norm_squared()).collect();
        let variance = if ensemble.len() > 1 {
            per_seed_sq_dev.iter().sum::<f64>() / (ensemble.len() as f64 - 1.0)
        } else {
            0.0
        };

        let hessian_norm = if cfg.measure_hessian {
            Some(
                hessian_fd(&cfg.true_model, &policy, &theta, &reward, &cfg.bias_x0, horizon)?
                    .spectral_norm,
            )
        } else {
            None
        };

        rows.push(HorizonMeasurement {
            horizon,
            bias_norm,
            variance,
            per_seed_sq_dev,
            hessian_norm,
        });
    }
    if rows.is_empty() {
        return Err(Error::InvalidConfig(
            "scaling study diverged at the first horizon".into(),
        ));
    }
    let hs: Vec<usize> = rows.iter().map(|r| r.horizon).collect();
    let bias: Vec<f64> = rows.iter().map(|r| r.bias_norm).collect();
    let var: Vec<f64> = rows.iter().map(|r| r.variance).collect();
    let bias_fit = fit_regimes(&hs, &bias);
    let variance_fit = fit_regimes(&hs, &var);
    let hessian_fit = if cfg.measure_hessian {
        let h: Vec<f64> = rows.iter().map(|r| r.hessian_norm.unwrap()).collect();
        Some(fit_regimes(&hs, &h))
    } else {
        None
    };
    Ok(ScalingStudyResult {
        rows,
        bias_fit,
        variance_fit,
        hessian_fit,
        truncated_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn scalar_mat(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn transition_table_open_loop_powers() {
        let a_cl = vec![scalar_mat(2.0); 4];
        let table = TransitionTable::new(&a_cl);
        // Phi_{3,0} = a^{3-0-1} = 4.
        assert_eq!(table.get(3, 0)[(0, 0)], 4.0);
        assert_eq!(table.get(4, 0)[(0, 0)], 8.0);
        for tp in 0..4 {
            assert_eq!(table.get(tp + 1, tp)[(0, 0)], 1.0);
        }
    }

    #[test]
    fn transition_table_feedback_decay() {
        // a - b k = 2 - 1.5 = 0.5.
        let a_cl = vec![scalar_mat(0.5); 6];
        let table = TransitionTable::new(&a_cl);
        for t in 1..=6 {
            for tp in 0..t {
                let expected = 0.5_f64.powi((t - tp - 1) as i32);
                assert!((table.get(t, tp)[(0, 0)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stabilizing_gain_bounds_transition_growth() {
        // With |a - b k| < 1 for both systems every transition matrix decays
        // geometrically; the measured ratio to the closed-loop radius power
        // never exceeds 1.
        let (a, b, k) = (1.2, 1.0, 0.9);
        let (a_hat, b_hat) = (1.3, 1.0);
        let r: f64 = a - b * k;
        let r_hat: f64 = a_hat - b_hat * k;
        assert!(r.abs() < 1.0 && r_hat.abs() < 1.0);
        let horizon = 30;
        for radius in [r, r_hat] {
            let table = TransitionTable::new(&vec![scalar_mat(radius); horizon]);
            let mut max_ratio = 0.0_f64;
            for t in 1..=horizon {
                for tp in 0..t {
                    let ratio = table.get(t, tp).amax() / radius.abs().powi((t - tp - 1) as i32);
                    max_ratio = max_ratio.max(ratio);
                }
            }
            assert!(max_ratio <= 1.0 + 1e-9);
        }
    }

    fn jac(a: DMatrix<f64>, b: DMatrix<f64>) -> JacobianPair {
        JacobianPair { a, b }
    }

    #[test]
    fn decomposition_vanishes_for_an_exact_model() {
        let horizon = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let true_jacs: Vec<JacobianPair> = (0..horizon)
            .map(|_| {
                jac(
                    DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)),
                    DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0)),
                )
            })
            .collect();
        let k_seq = vec![DMatrix::zeros(2, 3); horizon];
        let d = error_decomposition(&true_jacs, &true_jacs, &k_seq);
        for e in &d.entries {
            assert_eq!(e.lhs.amax(), 0.0);
            assert_eq!(e.term_a.amax(), 0.0);
            assert_eq!(e.term_b.amax(), 0.0);
        }
    }

    #[test]
    fn decomposition_identity_holds_on_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..20 {
            let n = rng.gen_range(1..=4);
            let m = rng.gen_range(1..=2);
            let horizon = rng.gen_range(2..=20);
            let mk = |rng: &mut ChaCha8Rng| {
                jac(
                    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.1..1.1)),
                    DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0)),
                )
            };
            let true_jacs: Vec<JacobianPair> = (0..horizon).map(|_| mk(&mut rng)).collect();
            let model_jacs: Vec<JacobianPair> = true_jacs
                .iter()
                .map(|j| {
                    jac(
                        &j.a + DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.2..0.2)),
                        &j.b + DMatrix::from_fn(n, m, |_, _| rng.gen_range(-0.2..0.2)),
                    )
                })
                .collect();
            let k_seq: Vec<DMatrix<f64>> = (0..horizon)
                .map(|_| DMatrix::from_fn(m, n, |_, _| rng.gen_range(-0.3..0.3)))
                .collect();
            let d = error_decomposition(&true_jacs, &model_jacs, &k_seq);
            assert!(
                d.max_residual() <= 1e-12 * d.scale,
                "trial {trial}: residual {} vs scale {}",
                d.max_residual(),
                d.scale
            );
        }
    }

    #[test]
    fn scalar_decomposition_matches_the_closed_form() {
        // Open-loop scalar pair a=2 / ahat=2.2 with b = bhat = 1:
        // lhs_{t,0} = 2.2^{t-1} - 2^{t-1}, the input-channel term vanishes,
        // and the state-channel sum telescopes exactly.
        let horizon = 8;
        let true_jacs: Vec<JacobianPair> =
            (0..horizon).map(|_| jac(scalar_mat(2.0), scalar_mat(1.0))).collect();
        let model_jacs: Vec<JacobianPair> =
            (0..horizon).map(|_| jac(scalar_mat(2.2), scalar_mat(1.0))).collect();
        let k_seq = vec![DMatrix::zeros(1, 1); horizon];
        let d = error_decomposition(&true_jacs, &model_jacs, &k_seq);
        for t in 1..=horizon {
            let e = d.entry(t, 0).unwrap();
            let expected = 2.2_f64.powi((t - 1) as i32) - 2.0_f64.powi((t - 1) as i32);
            assert!((e.lhs[(0, 0)] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            assert_eq!(e.term_b[(0, 0)], 0.0);
            // Per-step magnification sum: sum_s 2^{t-s-1} * 0.2 * 2.2^{s-1}.
            let mut sum = 0.0;
            for s in 1..t {
                sum += 2.0_f64.powi((t - s - 1) as i32) * 0.2 * 2.2_f64.powi((s - 1) as i32);
            }
            assert!((e.term_a[(0, 0)] - sum).abs() <= 1e-12 * sum.abs().max(1.0));
            assert!(e.residual.amax() <= 1e-12 * d.scale);
        }
    }

    #[test]
    fn scalar_lq_reference_curve_and_condition_number() {
        let h = hessian_scalar_lq(2.0, 1.0, 0.0, 1.0, 3);
        assert_eq!(h.deltas, vec![14.0, 6.0, 2.0]);
        assert_eq!(h.condition_number, 7.0);

        // Feedback gain 1.5 flattens the curve: bounded entries and a
        // bounded condition number at every horizon.
        for horizon in 3..=50 {
            let hf = hessian_scalar_lq(2.0, 1.0, 1.5, 1.0, horizon);
            assert!(hf.deltas.iter().all(|d| *d < 2.0));
            assert!(hf.condition_number < 2.0);
        }

        let h1 = hessian_scalar_lq(2.0, 1.0, 0.0, 1.0, 1);
        assert_eq!(h1.deltas.len(), 1);
        assert_eq!(h1.condition_number, 1.0);
    }

    /// Independent closed form for the true Hessian of the open-loop scalar
    /// quadratic problem: with J = -sum_t w (x_t)^2 and
    /// x_t = a^t x0 + sum_{s<t} a^{t-1-s} b u_s (quadratic in u),
    /// H_{ij} = -2 w sum_{t > max(i,j)} a^{t-1-i} a^{t-1-j} b^2.
    fn scalar_lq_true_hessian(a: f64, b: f64, w: f64, horizon: usize) -> DMatrix<f64> {
        DMatrix::from_fn(horizon, horizon, |i, j| {
            let mut sum = 0.0;
            for t in (i.max(j) + 1)..=horizon {
                sum += a.powi((t - 1 - i) as i32) * a.powi((t - 1 - j) as i32) * b * b;
            }
            -2.0 * w * sum
        })
    }

    #[test]
    fn hessian_fd_matches_the_independent_closed_form() {
        let (a, b, w) = (2.0, 1.0, 0.5);
        let m = DynamicsModel::ScalarLinear { a, b };
        let horizon = 5;
        let policy = Policy::open_loop(1, horizon);
        let theta = DVector::zeros(horizon);
        let reward = RewardFunction::scalar_lq(w, horizon);
        let x0 = DVector::from_vec(vec![1.0]);
        let est = hessian_fd(&m, &policy, &theta, &reward, &x0, horizon).unwrap();
        let expected = scalar_lq_true_hessian(a, b, w, horizon);
        let scale = expected.amax();
        assert!(
            (&est.h - &expected).amax() <= 1e-6 * scale,
            "fd Hessian does not match the closed form"
        );
        assert!(est.asymmetry <= 1e-6 * scale);
    }

    #[test]
    fn quadratic_objective_hessian_is_parameter_independent() {
        let m = DynamicsModel::ScalarLinear { a: 1.5, b: 0.8 };
        let horizon = 4;
        let policy = Policy::open_loop(1, horizon);
        let reward = RewardFunction::scalar_lq(0.5, horizon);
        let x0 = DVector::from_vec(vec![0.7]);
        let h0 = hessian_fd(&m, &policy, &DVector::zeros(horizon), &reward, &x0, horizon).unwrap();
        let theta1 = DVector::from_fn(horizon, |i, _| 0.3 * (i as f64 + 1.0));
        let h1 = hessian_fd(&m, &policy, &theta1, &reward, &x0, horizon).unwrap();
        let scale = h0.h.amax();
        assert!((&h0.h - &h1.h).amax() <= 1e-6 * scale);
    }

    #[test]
    fn spectral_norm_agrees_with_a_dense_eigensolve() {
        assert_eq!(spectral_norm(&DMatrix::identity(4, 4)), 1.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![14.0, 6.0, 2.0]));
        assert!((spectral_norm(&d) - 14.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let raw = DMatrix::from_fn(10, 10, |_, _| rng.gen_range(-1.0..1.0));
        let sym = (&raw + raw.transpose()) / 2.0;
        let eig = sym.clone().symmetric_eigen();
        let expected = eig.eigenvalues.iter().fold(0.0_f64, |m: f64, l: &f64| m.max(l.abs()));
        assert!((spectral_norm(&sym) - expected).abs() <= 1e-6 * expected);
    }

    #[test]
    fn zero_matrix_norm_and_singular_condition_number() {
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 3)), 0.0);
        let singular = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0, 1.0]));
        let est = finish_hessian(singular, HessianMethod::FiniteDifference);
        assert!(est.condition_number.is_infinite());
        assert_eq!(est.zero_eigenvalues, 1);
    }

    #[test]
    fn hessian_estimate_norm_dominates_the_largest_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let raw = DMatrix::from_fn(8, 8, |_, _| rng.gen_range(-2.0..2.0));
            let est = finish_hessian(raw, HessianMethod::FiniteDifference);
            let eig = est.h.clone().symmetric_eigen();
            let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
            assert!(est.spectral_norm >= max_abs * (1.0 - 1e-6));
        }
    }

    #[test]
    fn regime_classifier_separates_clean_growth_laws() {
        let horizons: Vec<usize> = (1..=8).map(|i| 5 * i).collect();
        let exponential: Vec<f64> = horizons.iter().map(|t| 1.25_f64.powi(*t as i32)).collect();
        let fit = fit_regimes(&horizons, &exponential);
        assert_eq!(fit.regime, Regime::Exponential);
        assert!((fit.exp_slope - 1.25_f64.ln()).abs() < 1e-9);

        let polynomial: Vec<f64> = horizons.iter().map(|t| (*t as f64).powi(2)).collect();
        let fit = fit_regimes(&horizons, &polynomial);
        assert_eq!(fit.regime, Regime::Polynomial);
        assert!((fit.poly_slope - 2.0).abs() < 1e-9);

        // Saturating data prefers the polynomial label.
        let saturating: Vec<f64> = horizons.iter().map(|_| 3.0).collect();
        let fit = fit_regimes(&horizons, &saturating);
        assert_eq!(fit.regime, Regime::Polynomial);
    }

    /// `setpoint_probe` measures bias along a bounded trajectory (start at
    /// the origin, constant reward gradient toward a unit setpoint), the
    /// regime where error growth is governed purely by the transition
    /// products. The regulation probe (quadratic reward from x0 = 1) instead
    /// lets the reward gradient scale with the state.
    fn scalar_study(
        a: f64,
        a_hat: f64,
        b: f64,
        b_hat: f64,
        gain: f64,
        setpoint_probe: bool,
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
            seeds: 64,
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
    fn unstable_open_loop_bias_slope_is_bracketed_by_the_spectral_radii() {
        let result = scaling_study(&scalar_study(1.2, 1.3, 1.0, 1.0, 0.0, true)).unwrap();
        let slope = result.bias_fit.exp_slope;
        assert!(
            slope >= 1.2_f64.ln() - 0.1 && slope <= 1.3_f64.ln() + 0.1,
            "bias slope {slope} outside the bracket"
        );
        assert_eq!(result.variance_fit.regime, Regime::Exponential);
    }

    #[test]
    fn stabilized_feedback_flattens_bias_growth() {
        // Gain chosen so the closed-loop radius is 0.5 for both systems.
        // States decay under the feedback, so the bias saturates and the
        // fitted exponential slope is essentially zero.
        let k = 0.7;
        let b_hat = (1.3 - 0.5) / k;
        let result = scaling_study(&scalar_study(1.2, 1.3, 1.0, b_hat, k, false)).unwrap();
        assert!(
            result.bias_fit.exp_slope <= 0.02,
            "feedback bias slope {} too steep",
            result.bias_fit.exp_slope
        );
        assert_eq!(result.variance_fit.regime, Regime::Polynomial);

        // Directional check at the final horizon: the stabilized closed loop
        // is at least 10x less biased than the unstable open loop, on both
        // probe constructions.
        let open = scaling_study(&scalar_study(1.2, 1.3, 1.0, 1.0, 0.0, false)).unwrap();
        let open_bias = open.rows.last().unwrap().bias_norm;
        let fb_bias = result.rows.last().unwrap().bias_norm;
        assert!(
            open_bias > 10.0 * fb_bias,
            "open {open_bias} vs feedback {fb_bias}"
        );

        let open_sp = scaling_study(&scalar_study(1.2, 1.3, 1.0, 1.0, 0.0, true)).unwrap();
        let fb_sp = scaling_study(&scalar_study(1.2, 1.3, 1.0, b_hat, k, true)).unwrap();
        assert!(
            open_sp.rows.last().unwrap().bias_norm > 10.0 * fb_sp.rows.last().unwrap().bias_norm
        );
    }

    #[test]
    fn exact_model_has_no_bias_at_any_horizon() {
        let result = scaling_study(&scalar_study(1.2, 1.2, 1.0, 1.0, 0.0, false)).unwrap();
        for row in &result.rows {
            assert!(row.bias_norm <= 1e-8, "horizon {}: {}", row.horizon, row.bias_norm);
        }
    }

    #[test]
    fn bounded_sensitivities_saturate_beyond_moderate_horizons() {
        // Stabilized scalar feedback: the largest sensitivity norm stops
        // growing (up to 1e-9) once the geometric series has saturated.
        let (a, b, k) = (1.2, 1.0, 0.9);
        let m = DynamicsModel::ScalarLinear { a, b };
        let mut previous: Option<f64> = None;
        for horizon in [10usize, 15, 20, 25, 30] {
            let policy = Policy::scalar_tracking(k, horizon);
            let theta = DVector::zeros(horizon);
            let traj = rollout(&m, &m, &policy, &theta, &DVector::from_vec(vec![1.0]), horizon)
                .unwrap();
            let sens =
                sensitivities_forward(&traj, JacobianSource::True, &policy, &theta).unwrap();
            let max_norm = sens.0.iter().map(|s| s.norm()).fold(0.0_f64, f64::max);
            if let Some(prev) = previous {
                assert!(
                    max_norm <= prev + 1e-9,
                    "sensitivity grew from {prev} to {max_norm} at horizon {horizon}"
                );
            }
            previous = Some(max_norm);
        }
    }

    #[test]
    fn diverging_configurations_truncate_the_horizon_list() {
        let cfg = ScalingStudyConfig {
            true_model: DynamicsModel::ScalarLinear { a: 3.0, b: 1.0 },
            model: DynamicsModel::ScalarLinear { a: 3.0, b: 1.0 },
            instance: Box::new(|horizon| StudyInstance {
                policy: Policy::open_loop(1, horizon),
                theta: DVector::zeros(horizon),
                reward: RewardFunction::scalar_lq(0.5, horizon),
            }),
            horizons: vec![5, 100, 400, 700, 1000],
            batch: 1,
            seeds: 4,
            seed_base: 0,
            init: InitDist::PointMass(DVector::from_vec(vec![1.0])),
            bias_x0: DVector::from_vec(vec![1.0]),
            measure_hessian: false,
        };
        let result = scaling_study(&cfg).unwrap();
        assert!(result.truncated_at.is_some());
        assert!(result.rows.len() < 5);
    }

    #[test]
    fn too_few_horizons_is_a_config_error() {
        let mut cfg = scalar_study(1.2, 1.3, 1.0, 1.0, 0.0, false);
        cfg.horizons = vec![5, 10, 15, 20];
        assert!(matches!(scaling_study(&cfg), Err(Error::InvalidConfig(_))));
    }
}
