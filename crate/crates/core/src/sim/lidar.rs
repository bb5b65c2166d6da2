use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};

use super::WorldMap;
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::rng;

/// Range sensor geometry and noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarSpec {
    pub beam_count: usize,
    /// Angular field of view in radians, centered on the heading.
    pub fov: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            beam_count: 360,
            fov: 2.0 * PI,
            max_range: 10.0,
            range_noise_sigma: 0.01,
        }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<()> {
        if self.beam_count == 0 {
            return Err(Error::Domain("beam_count must be ≥ 1".into()));
        }
        if !(self.fov > 0.0 && self.fov <= 2.0 * PI + 1e-12) {
            return Err(Error::Domain(format!("fov {} outside (0, 2π]", self.fov)));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::Domain("max_range must be > 0".into()));
        }
        if !(self.range_noise_sigma >= 0.0) {
            return Err(Error::Domain("range_noise_sigma must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Beam angles relative to the heading.
    ///
    /// A full circle is split into `beam_count` equal sectors starting at -π,
    /// so beam `beam_count / 2` points straight ahead. Partial fields of view
    /// include both edges.
    pub fn beam_angles(&self) -> Vec<f64> {
        let n = self.beam_count;
        if self.fov >= 2.0 * PI - 1e-12 {
            (0..n)
                .map(|k| -PI + k as f64 * self.fov / n as f64)
                .collect()
        } else if n == 1 {
            vec![0.0]
        } else {
            (0..n)
                .map(|k| -self.fov / 2.0 + k as f64 * self.fov / (n - 1) as f64)
                .collect()
        }
    }
}

/// One sweep of range readings.
///
/// Beams without a return carry `max_range` and `hit == false`.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub ranges: Vec<f64>,
    pub angles: Vec<f64>,
    pub hit: Vec<bool>,
    pub max_range: f64,
}

impl LidarScan {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn empty(max_range: f64) -> Self {
        Self {
            ranges: Vec::new(),
            angles: Vec::new(),
            hit: Vec::new(),
            max_range,
        }
    }

    /// Every `stride`-th beam, starting with the first.
    pub fn subsample(&self, stride: usize) -> LidarScan {
        let stride = stride.max(1);
        let pick = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<_>>();
        LidarScan {
            ranges: pick(&self.ranges),
            angles: pick(&self.angles),
            hit: self.hit.iter().step_by(stride).copied().collect(),
            max_range: self.max_range,
        }
    }

    /// World-frame endpoints of beams that returned, with their beam index.
    pub fn hit_endpoints<'a>(
        &'a self,
        pose: &'a Pose,
    ) -> impl Iterator<Item = (usize, f64, f64)> + 'a {
        (0..self.len()).filter(|&i| self.hit[i]).map(move |i| {
            let (s, c) = (pose.theta + self.angles[i]).sin_cos();
            (i, pose.x + self.ranges[i] * c, pose.y + self.ranges[i] * s)
        })
    }
}

/// Simulates a scan from `pose` by exact ray–segment intersection.
pub fn cast_scan(world: &WorldMap, pose: &Pose, spec: &LidarSpec, seed: u64) -> Result<LidarScan> {
    spec.validate()?;
    if !pose.is_finite() || !world.bounds().contains(pose.x, pose.y) {
        return Err(Error::Domain(format!("pose {pose:?} outside world bounds")));
    }
    let mut rng = rng::seeded(seed);
    let noise = (spec.range_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.range_noise_sigma).expect("sigma validated"));
    let angles = spec.beam_angles();
    let mut ranges = Vec::with_capacity(angles.len());
    let mut hit = Vec::with_capacity(angles.len());
    // Positive floor for noisy ranges.
    let min_range = 1e-3_f64.min(spec.max_range);
    for &a in &angles {
        match world.raycast(pose.x, pose.y, pose.theta + a) {
            Some(d) if d < spec.max_range => {
                let n = noise.map_or(0.0, |nd| nd.sample(&mut rng));
                ranges.push((d + n).clamp(min_range, spec.max_range));
                hit.push(true);
            }
            _ => {
                ranges.push(spec.max_range);
                hit.push(false);
            }
        }
    }
    Ok(LidarScan {
        ranges,
        angles,
        hit,
        max_range: spec.max_range,
    })
}
