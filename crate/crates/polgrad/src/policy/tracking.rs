//! Body-frame tracking control law for the planar vehicle models, with
//! closed-form partial derivatives.
//!
//! The law is smooth everywhere except the angle-wrap seam; input saturation
//! is applied by the dynamics at step time, not here, so the raw commands
//! (and their derivatives) remain meaningful to the gradient estimators.

use nalgebra::{DMatrix, DVector};

use super::reference::{wrap_angle, ReferencePoint};

/// Which planar state layout the tracking law operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackedModel {
    /// State `[x, y, v, phi]`, input `[a, omega]`.
    Car,
    /// State `[x, y, phi]`, input `[v, omega]`.
    Unicycle,
}

impl TrackedModel {
    pub fn state_dim(&self) -> usize {
        match self {
            TrackedModel::Car => 4,
            TrackedModel::Unicycle => 3,
        }
    }

    pub fn input_dim(&self) -> usize {
        2
    }

    /// Indices of the planar position inside the state vector.
    pub fn position_indices(&self) -> (usize, usize) {
        (0, 1)
    }

    /// Embed a reference point into this layout's state vector.
    pub fn point_to_state(&self, p: &ReferencePoint) -> DVector<f64> {
        match self {
            TrackedModel::Car => DVector::from_vec(vec![p.x, p.y, p.speed, p.heading]),
            TrackedModel::Unicycle => DVector::from_vec(vec![p.x, p.y, p.heading]),
        }
    }

    /// Shift a reference point by a state-layout correction vector.
    pub fn shift_point(&self, p: &ReferencePoint, delta: &DVector<f64>) -> ReferencePoint {
        match self {
            TrackedModel::Car => ReferencePoint {
                x: p.x + delta[0],
                y: p.y + delta[1],
                speed: p.speed + delta[2],
                heading: p.heading + delta[3],
            },
            TrackedModel::Unicycle => ReferencePoint {
                x: p.x + delta[0],
                y: p.y + delta[1],
                speed: p.speed,
                heading: p.heading + delta[2],
            },
        }
    }
}

/// Fixed shaping constants of the tracking law (not trained).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingShape {
    /// Along-track error feedback into the speed channel.
    pub c_along: f64,
    /// Lateral error feedback into the heading channel (inside an `atan`).
    pub c_lateral: f64,
}

impl Default for TrackingShape {
    fn default() -> Self {
        TrackingShape {
            c_along: 1.0,
            c_lateral: 2.0,
        }
    }
}

/// Tracking command plus its partial derivatives with respect to the state,
/// the desired state (state layout), and the two gains.
#[derive(Debug, Clone)]
pub struct TrackingOutput {
    pub u: DVector<f64>,
    /// `du/dx`, `m x n`.
    pub du_dx: DMatrix<f64>,
    /// `du/d(x_des)` in the model's state layout, `m x n`.
    pub du_ddes: DMatrix<f64>,
    /// `du/d[k_v, k_omega]`, `m x 2`.
    pub du_dgains: DMatrix<f64>,
}

/// Evaluate the tracking law and all partial derivatives.
///
/// Car: body-frame position errors `(e_par, e_perp)`,
/// `a = k_v (v_des + c_along e_par - v)` and
/// `omega = k_w (wrap(phi_des - phi) + atan(c_lateral e_perp))`.
/// Unicycle: `v = k_v e_par + v_des`, `omega = k_w wrap(phi_des - phi)`.
pub fn tracking_control(
    kind: TrackedModel,
    x: &DVector<f64>,
    des: &ReferencePoint,
    k_v: f64,
    k_w: f64,
    shape: &TrackingShape,
) -> TrackingOutput {
    let ex = des.x - x[0];
    let ey = des.y - x[1];
    match kind {
        TrackedModel::Car => {
            let v = x[2];
            let phi = x[3];
            let (sin, cos) = phi.sin_cos();
            let e_par = cos * ex + sin * ey;
            let e_perp = -sin * ex + cos * ey;
            let dphi = wrap_angle(des.heading - phi);
            let lat = (shape.c_lateral * e_perp).atan();
            // d(atan(c e)) / d(e)
            let s = shape.c_lateral / (1.0 + (shape.c_lateral * e_perp).powi(2));

            let a_cmd = k_v * (des.speed + shape.c_along * e_par - v);
            let w_cmd = k_w * (dphi + lat);
            let u = DVector::from_vec(vec![a_cmd, w_cmd]);

            let mut du_dx = DMatrix::zeros(2, 4);
            du_dx[(0, 0)] = -k_v * shape.c_along * cos;
            du_dx[(0, 1)] = -k_v * shape.c_along * sin;
            du_dx[(0, 2)] = -k_v;
            du_dx[(0, 3)] = k_v * shape.c_along * e_perp;
            du_dx[(1, 0)] = k_w * s * sin;
            du_dx[(1, 1)] = -k_w * s * cos;
            du_dx[(1, 3)] = k_w * (-1.0 - s * e_par);

            let mut du_ddes = DMatrix::zeros(2, 4);
            du_ddes[(0, 0)] = k_v * shape.c_along * cos;
            du_ddes[(0, 1)] = k_v * shape.c_along * sin;
            du_ddes[(0, 2)] = k_v;
            du_ddes[(1, 0)] = -k_w * s * sin;
            du_ddes[(1, 1)] = k_w * s * cos;
            du_ddes[(1, 3)] = k_w;

            let mut du_dgains = DMatrix::zeros(2, 2);
            du_dgains[(0, 0)] = des.speed + shape.c_along * e_par - v;
            du_dgains[(1, 1)] = dphi + lat;

            TrackingOutput {
                u,
                du_dx,
                du_ddes,
                du_dgains,
            }
        }
        TrackedModel::Unicycle => {
            let phi = x[2];
            let (sin, cos) = phi.sin_cos();
            let e_par = cos * ex + sin * ey;
            let e_perp = -sin * ex + cos * ey;
            let dphi = wrap_angle(des.heading - phi);

            let v_cmd = k_v * e_par + des.speed;
            let w_cmd = k_w * dphi;
            let u = DVector::from_vec(vec![v_cmd, w_cmd]);

            let mut du_dx = DMatrix::zeros(2, 3);
            du_dx[(0, 0)] = -k_v * cos;
            du_dx[(0, 1)] = -k_v * sin;
            du_dx[(0, 2)] = k_v * e_perp;
            du_dx[(1, 2)] = -k_w;

            let mut du_ddes = DMatrix::zeros(2, 3);
            du_ddes[(0, 0)] = k_v * cos;
            du_ddes[(0, 1)] = k_v * sin;
            du_ddes[(1, 2)] = k_w;

            let mut du_dgains = DMatrix::zeros(2, 2);
            du_dgains[(0, 0)] = e_par;
            du_dgains[(1, 1)] = dphi;

            TrackingOutput {
                u,
                du_dx,
                du_ddes,
                du_dgains,
            }
        }
    }
}
