use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::pose::{angle_diff, normalize_angle, Pose};
use crate::rng::{self, Rng};

/// Rotate–translate–rotate decomposition of a relative motion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdometryReading {
    pub delta_r1: f64,
    pub delta_t: f64,
    pub delta_r2: f64,
}

impl OdometryReading {
    pub fn is_finite(&self) -> bool {
        self.delta_r1.is_finite() && self.delta_t.is_finite() && self.delta_r2.is_finite()
    }
}

/// Four-parameter odometry noise model.
///
/// Standard deviations grow linearly with motion magnitude:
/// rotations get `rot_rot·|δr| + rot_trans·δt`, the translation gets
/// `trans_trans·δt + trans_rot·(|δr1| + |δr2|)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdometryNoise {
    pub rot_rot: f64,
    pub rot_trans: f64,
    pub trans_trans: f64,
    pub trans_rot: f64,
}

impl OdometryNoise {
    pub fn new(rot_rot: f64, rot_trans: f64, trans_trans: f64, trans_rot: f64) -> Self {
        Self {
            rot_rot,
            rot_trans,
            trans_trans,
            trans_rot,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rot_rot == 0.0
            && self.rot_trans == 0.0
            && self.trans_trans == 0.0
            && self.trans_rot == 0.0
    }
}

/// Applies the rotate–translate–rotate motion to `pose`.
pub fn apply_odometry(pose: &Pose, odom: &OdometryReading) -> Pose {
    let heading = pose.theta + odom.delta_r1;
    Pose::new(
        pose.x + odom.delta_t * heading.cos(),
        pose.y + odom.delta_t * heading.sin(),
        pose.theta + odom.delta_r1 + odom.delta_r2,
    )
}

/// Draws a noisy version of `odom` from the alpha model.
pub fn perturb_odometry(
    odom: &OdometryReading,
    noise: &OdometryNoise,
    rng: &mut Rng,
) -> OdometryReading {
    if noise.is_zero() {
        return *odom;
    }
    let t = odom.delta_t.abs();
    let r1 = odom.delta_r1.abs();
    let r2 = odom.delta_r2.abs();
    let sd_r1 = noise.rot_rot * r1 + noise.rot_trans * t;
    let sd_t = noise.trans_trans * t + noise.trans_rot * (r1 + r2);
    let sd_r2 = noise.rot_rot * r2 + noise.rot_trans * t;
    let mut gauss = |sd: f64| sd * rng.sample::<f64, _>(StandardNormal);
    let delta_r1 = normalize_angle(odom.delta_r1 + gauss(sd_r1));
    let delta_t = odom.delta_t + gauss(sd_t);
    let delta_r2 = normalize_angle(odom.delta_r2 + gauss(sd_r2));
    OdometryReading {
        delta_r1,
        delta_t,
        delta_r2,
    }
}

/// Decomposes the motion `prev → next` into an odometry reading, then
/// corrupts it with `noise` drawn from `seed`.
pub fn synthesize_odometry(
    prev: &Pose,
    next: &Pose,
    noise: &OdometryNoise,
    seed: u64,
) -> OdometryReading {
    let dx = next.x - prev.x;
    let dy = next.y - prev.y;
    let delta_t = dx.hypot(dy);
    let exact = if delta_t < 1e-12 {
        OdometryReading {
            delta_r1: 0.0,
            delta_t: 0.0,
            delta_r2: angle_diff(next.theta, prev.theta),
        }
    } else {
        let delta_r1 = angle_diff(dy.atan2(dx), prev.theta);
        OdometryReading {
            delta_r1,
            delta_t,
            delta_r2: angle_diff(next.theta, prev.theta + delta_r1),
        }
    };
    let mut rng = rng::seeded(seed);
    perturb_odometry(&exact, noise, &mut rng)
}
