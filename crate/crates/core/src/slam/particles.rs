use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::grid::OccupancyGrid;
use crate::error::{Error, Result};
use crate::pose::{circular_mean, Pose};

/// A pose hypothesis carrying its own map.
///
/// Maps are shared between copies after resampling and cloned on first write.
#[derive(Debug, Clone)]
pub struct Particle {
    pub pose: Pose,
    pub log_weight: f64,
    pub map: Arc<OccupancyGrid>,
}

impl Particle {
    pub fn map_mut(&mut self) -> &mut OccupancyGrid {
        Arc::make_mut(&mut self.map)
    }
}

/// Fixed-size weighted particle population.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    particles: Vec<Particle>,
    normalized: bool,
}

/// `ln Σ exp(v)`, `-∞` for an empty or all `-∞` slice.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl ParticleSet {
    pub fn new(particles: Vec<Particle>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Domain(
                "a particle set needs at least one particle".into(),
            ));
        }
        Ok(Self {
            particles,
            normalized: false,
        })
    }

    /// `n` particles at `pose` sharing `map`, with uniform normalized weights.
    pub fn uniform(n: usize, pose: Pose, map: OccupancyGrid) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("particle count must be >= 1".into()));
        }
        let map = Arc::new(map);
        let lw = -(n as f64).ln();
        let particles = (0..n)
            .map(|_| Particle {
                pose,
                log_weight: lw,
                map: Arc::clone(&map),
            })
            .collect();
        Ok(Self {
            particles,
            normalized: true,
        })
    }

    /// Map-less set rebuilt from a dump, for inspecting recorded swarms.
    pub fn from_dump(dump: &SwarmDump) -> Result<Self> {
        let map = Arc::new(OccupancyGrid::new(
            super::grid::GridParams::default(),
            0.0,
            0.0,
            0.1,
            0.1,
        )?);
        Self::new(
            dump.iter()
                .map(|&(pose, log_weight)| Particle {
                    pose,
                    log_weight,
                    map: Arc::clone(&map),
                })
                .collect(),
        )
    }

    /// Builds a normalized set from particles whose weights are already uniform.
    pub(crate) fn from_resampled(particles: Vec<Particle>) -> Self {
        Self {
            particles,
            normalized: true,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Mutable access; clears the normalized flag.
    pub fn particles_mut(&mut self) -> &mut [Particle] {
        self.normalized = false;
        &mut self.particles
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_weight).collect()
    }

    /// Shifts log weights so the weights sum to one.
    pub fn normalize(&mut self) -> Result<()> {
        let lse = log_sum_exp(&self.log_weights());
        if !lse.is_finite() {
            return Err(Error::Contract(
                "cannot normalize: all weights are zero or non-finite".into(),
            ));
        }
        for p in &mut self.particles {
            p.log_weight -= lse;
        }
        self.normalized = true;
        Ok(())
    }

    fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::Contract("particle set is not normalized".into()))
        }
    }

    /// Normalized weights.
    pub fn weights(&self) -> Result<Vec<f64>> {
        self.require_normalized()?;
        Ok(self.particles.iter().map(|p| p.log_weight.exp()).collect())
    }

    /// `1 / Σ w²`.
    pub fn effective_sample_size(&self) -> Result<f64> {
        let w = self.weights()?;
        Ok(1.0 / w.iter().map(|w| w * w).sum::<f64>())
    }

    /// Weighted mean pose (circular mean for heading).
    pub fn mean_pose(&self) -> Result<Pose> {
        let w = self.weights()?;
        let x = self
            .particles
            .iter()
            .zip(&w)
            .map(|(p, w)| w * p.pose.x)
            .sum();
        let y = self
            .particles
            .iter()
            .zip(&w)
            .map(|(p, w)| w * p.pose.y)
            .sum();
        let th: Vec<f64> = self.particles.iter().map(|p| p.pose.theta).collect();
        Ok(Pose::new(x, y, circular_mean(&th, &w)))
    }

    /// Index of the highest-weight particle (lowest index on ties).
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.particles.iter().enumerate() {
            if p.log_weight > self.particles[best].log_weight {
                best = i;
            }
        }
        best
    }

    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.particles
            .iter()
            .map(|p| (p.pose.x, p.pose.y))
            .collect()
    }
}

/// Dumped swarm state: one `(pose, log_weight)` per particle.
pub type SwarmDump = Vec<(Pose, f64)>;

pub fn format_dump(set: &ParticleSet) -> String {
    let mut out = String::new();
    for p in set.particles() {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            p.pose.x, p.pose.y, p.pose.theta, p.log_weight
        );
    }
    out
}

/// Writes `x y theta log_weight` per line.
pub fn write_dump(set: &ParticleSet, path: &Path) -> Result<()> {
    fs::write(path, format_dump(set)).map_err(|e| Error::io(path, e))
}

pub fn parse_dump(text: &str, path: &Path) -> Result<SwarmDump> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, n + 1, format!("{e}")))?;
        if v.len() != 4 {
            return Err(Error::parse(
                path,
                n + 1,
                format!("expected 4 fields, found {}", v.len()),
            ));
        }
        if v[3].is_nan() || !v[..3].iter().all(|x| x.is_finite()) {
            return Err(Error::parse(path, n + 1, "non-finite value"));
        }
        out.push((Pose::new(v[0], v[1], v[2]), v[3]));
    }
    Ok(out)
}

pub fn read_dump(path: &Path) -> Result<SwarmDump> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dump(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slam::grid::GridParams;

    pub(crate) fn set_with_weights(w: &[f64]) -> ParticleSet {
        let map = Arc::new(OccupancyGrid::new(GridParams::default(), 0.0, 0.0, 1.0, 1.0).unwrap());
        let ps = w
            .iter()
            .enumerate()
            .map(|(i, &w)| Particle {
                pose: Pose::new(i as f64, 0.0, 0.0),
                log_weight: w.ln(),
                map: Arc::clone(&map),
            })
            .collect();
        let mut s = ParticleSet::new(ps).unwrap();
        s.normalize().unwrap();
        s
    }

    #[test]
    fn ess_examples() {
        let s = set_with_weights(&[1.0; 8]);
        assert!((s.effective_sample_size().unwrap() - 8.0).abs() < 1e-9);
        let s = set_with_weights(&[1.0, 0.0, 0.0]);
        assert!((s.effective_sample_size().unwrap() - 1.0).abs() < 1e-12);
        let s = set_with_weights(&[0.5, 0.25, 0.25]);
        assert!((s.effective_sample_size().unwrap() - 1.0 / 0.375).abs() < 1e-9);
    }

    #[test]
    fn ess_requires_normalized() {
        let mut s = set_with_weights(&[0.5, 0.5]);
        s.particles_mut()[0].log_weight += 1.0;
        assert!(matches!(s.effective_sample_size(), Err(Error::Contract(_))));
    }

    #[test]
    fn normalize_handles_tiny_log_weights() {
        let mut s = set_with_weights(&[1.0, 1.0]);
        s.particles_mut()[0].log_weight = -5000.0;
        s.particles_mut()[1].log_weight = -5001.0;
        s.normalize().unwrap();
        let w = s.weights().unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[0] > w[1]);
        for p in s.particles_mut() {
            p.log_weight = f64::NEG_INFINITY;
        }
        assert!(matches!(s.normalize(), Err(Error::Contract(_))));
    }

    #[test]
    fn dump_round_trips() {
        let s = set_with_weights(&[0.2, 0.8]);
        let text = format_dump(&s);
        let back = parse_dump(&text, Path::new("d.txt")).unwrap();
        assert_eq!(back.len(), 2);
        for (p, (pose, lw)) in s.particles().iter().zip(&back) {
            assert_eq!(p.pose, *pose);
            assert_eq!(p.log_weight, *lw);
        }
        let err = parse_dump("1 2 3 4\n1 2 x 4\n", Path::new("d.txt")).unwrap_err();
        assert!(err.to_string().contains('2'), "{err}");
    }

    #[test]
    fn copy_on_write_maps() {
        let mut s = set_with_weights(&[0.5, 0.5]);
        assert!(Arc::ptr_eq(&s.particles()[0].map, &s.particles()[1].map));
        s.particles_mut()[0].map_mut().set_log_odds(1, 1, 3.0);
        assert!(!Arc::ptr_eq(&s.particles()[0].map, &s.particles()[1].map));
        assert_eq!(s.particles()[1].map.log_odds(1, 1), 0.0);
    }
}
