use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wraps an angle into (-π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Signed smallest difference `a - b` on the circle.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// Mean direction of a set of angles with non-negative weights.
///
/// Falls back to the first angle when the resultant vanishes.
pub fn circular_mean(angles: &[f64], weights: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for (a, w) in angles.iter().zip(weights) {
        s += w * a.sin();
        c += w * a.cos();
    }
    if s.abs() < 1e-300 && c.abs() < 1e-300 {
        return angles.first().copied().map(normalize_angle).unwrap_or(0.0);
    }
    normalize_angle(s.atan2(c))
}

/// Planar robot pose. `theta` is kept in (-π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Maps a point from the robot frame into the world frame.
    pub fn transform_point(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.x + c * px - s * py, self.y + s * px + c * py)
    }

    /// Returns the pose displaced by `(dx, dy)` in the world frame and rotated by `dtheta`.
    pub fn offset(&self, dx: f64, dy: f64, dtheta: f64) -> Pose {
        Pose::new(self.x + dx, self.y + dy, self.theta + dtheta)
    }
}
