//! Reference trajectories for tracking tasks.

use serde::{Deserialize, Serialize};

/// A point on a reference path: planar position, path-tangent heading, and
/// desired forward speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

/// Time-parameterized desired trajectory `psi(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferencePath {
    /// Two tangent circles crossing at the origin, traversed at constant
    /// speed; one lap covers both circles in `lap_time` seconds.
    Figure8 {
        /// Diameter of each circle in meters.
        diameter: f64,
        /// Seconds per full lap (both circles).
        lap_time: f64,
        /// Traverse the right circle first instead of the left.
        right_first: bool,
    },
    /// Hold a fixed pose.
    Setpoint { point: ReferencePoint },
    /// Piecewise-linear interpolation through timed waypoints; clamped to
    /// the first/last point outside the table's time range.
    WaypointTable {
        times: Vec<f64>,
        points: Vec<ReferencePoint>,
    },
}

impl ReferencePath {
    /// Standard figure-8: 3 m circles, 5.5 s lap, left circle first.
    pub fn standard_figure8() -> ReferencePath {
        ReferencePath::Figure8 {
            diameter: 3.0,
            lap_time: 5.5,
            right_first: false,
        }
    }

    /// Total arc length of one period, where defined.
    pub fn path_length(&self) -> Option<f64> {
        match self {
            ReferencePath::Figure8 { diameter, .. } => Some(2.0 * std::f64::consts::PI * diameter),
            _ => None,
        }
    }

    /// Period used for the phase features fed to neural corrections.
    pub fn period(&self) -> f64 {
        match self {
            ReferencePath::Figure8 { lap_time, .. } => *lap_time,
            ReferencePath::Setpoint { .. } => 1.0,
            ReferencePath::WaypointTable { times, .. } => {
                times.last().copied().unwrap_or(1.0).max(1e-9)
            }
        }
    }

    /// Desired state at time `t` seconds.
    pub fn point_at(&self, t: f64) -> ReferencePoint {
        match self {
            ReferencePath::Figure8 {
                diameter,
                lap_time,
                right_first,
            } => figure8_point(*diameter, *lap_time, *right_first, t),
            ReferencePath::Setpoint { point } => *point,
            ReferencePath::WaypointTable { times, points } => waypoint_point(times, points, t),
        }
    }
}

/// Desired state on the figure-8 (or any reference path) at time `t`.
pub fn figure8_reference(path: &ReferencePath, t: f64) -> ReferencePoint {
    path.point_at(t)
}

fn figure8_point(diameter: f64, lap_time: f64, right_first: bool, t: f64) -> ReferencePoint {
    let r = diameter / 2.0;
    let length = 2.0 * std::f64::consts::PI * diameter;
    let speed = length / lap_time;
    let s = (speed * t).rem_euclid(length);
    // Angle traversed along the current circle.
    let u = s / r;
    let two_pi = 2.0 * std::f64::consts::PI;
    let (mut x, y, mut heading);
    if u < two_pi {
        // First circle, counterclockwise, starting at the crossing point
        // heading +y.
        x = -r + r * u.cos();
        y = r * u.sin();
        heading = u + std::f64::consts::FRAC_PI_2;
    } else {
        // Second circle, clockwise, same crossing heading.
        let w = u - two_pi;
        x = r - r * w.cos();
        y = r * w.sin();
        heading = std::f64::consts::FRAC_PI_2 - w;
    }
    if right_first {
        x = -x;
        heading = std::f64::consts::PI - heading;
    }
    ReferencePoint {
        x,
        y,
        heading: wrap_angle(heading),
        speed,
    }
}

fn waypoint_point(times: &[f64], points: &[ReferencePoint], t: f64) -> ReferencePoint {
    assert_eq!(times.len(), points.len());
    assert!(!times.is_empty(), "waypoint table must be non-empty");
    if t <= times[0] {
        return points[0];
    }
    if t >= *times.last().unwrap() {
        return *points.last().unwrap();
    }
    let idx = times.partition_point(|&tt| tt <= t);
    let (t0, t1) = (times[idx - 1], times[idx]);
    let (p0, p1) = (points[idx - 1], points[idx]);
    let alpha = (t - t0) / (t1 - t0);
    ReferencePoint {
        x: p0.x + alpha * (p1.x - p0.x),
        y: p0.y + alpha * (p1.y - p0.y),
        heading: wrap_angle(p0.heading + alpha * wrap_angle(p1.heading - p0.heading)),
        speed: p0.speed + alpha * (p1.speed - p0.speed),
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = theta - two_pi * ((theta + std::f64::consts::PI) / two_pi).floor();
    if w <= -std::f64::consts::PI {
        w + two_pi
    } else {
        w
    }
}
