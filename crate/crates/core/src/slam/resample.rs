use rand::Rng as _;
use rand_distr::StandardNormal;

use super::particles::{Particle, ParticleSet};
use crate::error::{Error, Result};
use crate::pose::{circular_mean, Pose};
use crate::rng;

/// Low-variance systematic selection: draws `n` indices from `weights` using
/// the comb `(u + k) / n` for `k = 0..n`, `u ∈ [0, 1)`.
///
/// `weights` need not be normalized but must have a positive sum.
pub fn systematic_indices(weights: &[f64], n: usize, u: f64) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    let mut cum = weights[0] / total;
    for k in 0..n {
        let target = (u + k as f64) / n as f64;
        while target > cum && i + 1 < weights.len() {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
    out
}

fn check_weights(set: &ParticleSet) -> Result<Vec<f64>> {
    let w = set.weights()?;
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Contract(
            "resampling needs a positive weight sum".into(),
        ));
    }
    Ok(w)
}

/// Systematic resampling. Survivors share their parent's map until written.
pub fn resample_standard(set: &ParticleSet, seed: u64) -> Result<ParticleSet> {
    let w = check_weights(set)?;
    let n = set.len();
    let u: f64 = rng::seeded(seed).random();
    let lw = -(n as f64).ln();
    let particles = systematic_indices(&w, n, u)
        .into_iter()
        .map(|i| Particle {
            log_weight: lw,
            ..set.particles()[i].clone()
        })
        .collect();
    Ok(ParticleSet::from_resampled(particles))
}

/// Moves each pose to the midpoint between itself and its Euclidean-nearest
/// other pose (ties to the lower index), heading to their circular mean.
/// A lone pose is returned unchanged.
pub fn fuse_nearest(poses: &[Pose]) -> Vec<Pose> {
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best: Option<(f64, usize)> = None;
            for (j, q) in poses.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = (p.x - q.x).powi(2) + (p.y - q.y).powi(2);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            match best {
                Some((_, j)) => {
                    let q = &poses[j];
                    Pose::new(
                        0.5 * (p.x + q.x),
                        0.5 * (p.y + q.y),
                        circular_mean(&[p.theta, q.theta], &[1.0, 1.0]),
                    )
                }
                None => *p,
            }
        })
        .collect()
}

/// Select, fuse and perturb.
///
/// 1. Particles at or above the weight median survive; the other slots
///    receive systematic-resampled copies of survivors.
/// 2. Every particle moves to the midpoint between its source survivor and
///    the nearest other survivor; heading becomes their circular mean.
/// 3. Position gets Gaussian noise with standard deviation
///    `perturb_sigma / max(w, 1/(10N))`, `w` being the source's weight.
///
/// Weights come out uniform.
pub fn resample_enhanced(set: &ParticleSet, perturb_sigma: f64, seed: u64) -> Result<ParticleSet> {
    let n = set.len();
    if n < 2 {
        return Err(Error::Contract(
            "enhanced resampling needs at least two particles".into(),
        ));
    }
    if !(perturb_sigma >= 0.0) {
        return Err(Error::Domain("perturb_sigma must be >= 0".into()));
    }
    let w = check_weights(set)?;
    let ps = set.particles();

    let mut sorted = w.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let survivors: Vec<usize> = (0..n).filter(|&i| w[i] >= median).collect();
    let mut keep = vec![false; n];
    for &s in &survivors {
        keep[s] = true;
    }

    let mut rng = rng::seeded(seed);
    let sw: Vec<f64> = survivors.iter().map(|&s| w[s]).collect();
    let mut refill = systematic_indices(&sw, n - survivors.len(), rng.random()).into_iter();
    let sources: Vec<usize> = (0..n)
        .map(|i| {
            if keep[i] {
                i
            } else {
                survivors[refill.next().unwrap()]
            }
        })
        .collect();

    let surv_poses: Vec<Pose> = survivors.iter().map(|&s| ps[s].pose).collect();
    let fused = fuse_nearest(&surv_poses);

    let w_floor = 1.0 / (10.0 * n as f64);
    let lw = -(n as f64).ln();
    let particles = sources
        .iter()
        .map(|&s| {
            let src = &ps[s];
            let fused = fused[survivors.binary_search(&s).unwrap()];
            let pose = if perturb_sigma > 0.0 {
                let sd = perturb_sigma / w[s].max(w_floor);
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                Pose::new(fused.x + sd * dx, fused.y + sd * dy, fused.theta)
            } else {
                fused
            };
            Particle {
                pose,
                log_weight: lw,
                map: src.map.clone(),
            }
        })
        .collect();
    Ok(ParticleSet::from_resampled(particles))
}
