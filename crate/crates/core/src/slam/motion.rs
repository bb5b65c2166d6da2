use crate::pose::Pose;
use crate::rng::{self, Rng};
use crate::sim::{apply_odometry, perturb_odometry, OdometryNoise, OdometryReading};

/// Samples a successor pose from the odometry motion model.
pub fn motion_update(
    pose: &Pose,
    odom: &OdometryReading,
    noise: &OdometryNoise,
    seed: u64,
) -> Pose {
    motion_update_with(pose, odom, noise, &mut rng::seeded(seed))
}

/// [`motion_update`] drawing from a caller-held stream.
pub fn motion_update_with(
    pose: &Pose,
    odom: &OdometryReading,
    noise: &OdometryNoise,
    rng: &mut Rng,
) -> Pose {
    apply_odometry(pose, &perturb_odometry(odom, noise, rng))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    fn odom(r1: f64, t: f64, r2: f64) -> OdometryReading {
        OdometryReading {
            delta_r1: r1,
            delta_t: t,
            delta_r2: r2,
        }
    }

    #[test]
    fn noise_free_examples() {
        let zero = OdometryNoise::default();
        let p = motion_update(&Pose::default(), &odom(0.0, 1.0, 0.0), &zero, 1);
        assert_eq!((p.x, p.y, p.theta), (1.0, 0.0, 0.0));
        let p = motion_update(&Pose::default(), &odom(FRAC_PI_2, 1.0, 0.0), &zero, 1);
        assert!(
            p.x.abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12 && (p.theta - FRAC_PI_2).abs() < 1e-12
        );
        let start = Pose::new(1.5, -2.0, 3.0);
        assert_eq!(motion_update(&start, &odom(0.0, 0.0, 0.0), &zero, 9), start);
    }

    #[test]
    fn noisy_is_seeded() {
        let noise = OdometryNoise::new(0.1, 0.1, 0.1, 0.1);
        let o = odom(0.2, 0.5, -0.1);
        let a = motion_update(&Pose::default(), &o, &noise, 4);
        assert_eq!(a, motion_update(&Pose::default(), &o, &noise, 4));
        assert_ne!(a, motion_update(&Pose::default(), &o, &noise, 5));
        assert!(a.theta > -std::f64::consts::PI && a.theta <= std::f64::consts::PI);
    }
}
