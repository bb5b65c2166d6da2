//! Degeneracy-conditioned pose optimization run when scan matching fails.

use std::fmt;

use crate::detect::Detector;
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::sim::LidarScan;
use crate::slam::{
    log_likelihood, raw_score, resample_enhanced, BeamModelConfig, OccupancyGrid, ParticleSet,
    PoseScorer, ScanPoints,
};

/// Lidar trust factor `φ(c) = -e^{0.7c} + e^{0.35} + 1`.
pub fn trust_factor(c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::Contract(format!(
            "degeneracy level {c} outside [0, 1]"
        )));
    }
    Ok(-(0.7 * c).exp() + 0.35f64.exp() + 1.0)
}

/// `Σ (s_i + exp(-ψ_i²/σ)) · φ(c)`.
pub fn scan_score(
    map: &OccupancyGrid,
    pose: &Pose,
    scan: &LidarScan,
    c: f64,
    cfg: &BeamModelConfig,
) -> Result<f64> {
    Ok(raw_score(map, pose, scan, cfg).0 * trust_factor(c)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Coarse translation step, m.
    pub delta_l: f64,
    /// Coarse rotation step, rad.
    pub delta_a: f64,
    pub base_rounds: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            delta_l: 0.05,
            delta_a: 0.01,
            base_rounds: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_l > 0.0 && self.delta_a > 0.0) {
            return Err(Error::Domain("delta_l and delta_a must be > 0".into()));
        }
        if self.base_rounds == 0 {
            return Err(Error::Domain("base_rounds must be >= 1".into()));
        }
        Ok(())
    }
}

/// `base_rounds + floor(c / 0.25)`.
pub fn rounds_for(c: f64, cfg: &SearchConfig) -> Result<usize> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::Contract(format!(
            "degeneracy level {c} outside [0, 1]"
        )));
    }
    Ok(cfg.base_rounds + (c / 0.25).floor() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Odometry,
    Lidar,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Odometry => "odometry",
            Source::Lidar => "lidar",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPose {
    pub pose: Pose,
    pub score: f64,
    pub source: Source,
}

/// The 8 compass displacements of length `l` followed by `±a` rotations.
pub fn search_candidates(p: &Pose, l: f64, a: f64) -> [Pose; 10] {
    let d = l * std::f64::consts::FRAC_1_SQRT_2;
    [
        p.offset(l, 0.0, 0.0),
        p.offset(d, d, 0.0),
        p.offset(0.0, l, 0.0),
        p.offset(-d, d, 0.0),
        p.offset(-l, 0.0, 0.0),
        p.offset(-d, -d, 0.0),
        p.offset(0.0, -l, 0.0),
        p.offset(d, -d, 0.0),
        p.offset(0.0, 0.0, a),
        p.offset(0.0, 0.0, -a),
    ]
}

/// Coarse/fine search on an arbitrary score: each round moves to the best of
/// the incumbent and its 10 candidates at `(δ_l, δ_a)`, then again at
/// `(δ_l/2, δ_a/2)`. A candidate replaces the incumbent only when strictly
/// better, and among equal candidates the lowest index wins.
pub fn coarse_fine_search_with(
    init: &Pose,
    rounds: usize,
    cfg: &SearchConfig,
    mut score: impl FnMut(&Pose) -> f64,
) -> (Pose, f64) {
    let mut pose = *init;
    let mut best = score(init);
    for _ in 0..rounds {
        for scale in [1.0, 0.5] {
            let mut step = None;
            for cand in search_candidates(&pose, cfg.delta_l * scale, cfg.delta_a * scale) {
                let v = score(&cand);
                if v > best {
                    best = v;
                    step = Some(cand);
                }
            }
            if let Some(p) = step {
                pose = p;
            }
        }
    }
    (pose, best)
}

/// Coarse/fine search on [`scan_score`] with `rounds_for(c)` rounds.
pub fn coarse_fine_search(
    map: &OccupancyGrid,
    init: &Pose,
    scan: &LidarScan,
    c: f64,
    cfg: &SearchConfig,
    beam: &BeamModelConfig,
) -> Result<ScoredPose> {
    cfg.validate()?;
    let rounds = rounds_for(c, cfg)?;
    let phi = trust_factor(c)?;
    let pts = ScanPoints::new(scan);
    let mut scorer = PoseScorer::new(map, &pts, beam);
    let (pose, raw) = coarse_fine_search_with(init, rounds, cfg, |p| scorer.raw_score(p).0);
    Ok(ScoredPose {
        pose,
        score: raw * phi,
        source: Source::Lidar,
    })
}

/// Higher score wins; an exact tie keeps the odometry pose.
pub fn select_pose(odom: ScoredPose, lidar: ScoredPose) -> ScoredPose {
    if lidar.score > odom.score {
        lidar
    } else {
        odom
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntiDegenConfig {
    pub search: SearchConfig,
    pub beam: BeamModelConfig,
    /// Base standard deviation of the enhanced-resampling perturbation, m.
    pub perturb_sigma: f64,
    /// Score every `subsample`-th beam during the search.
    pub subsample: usize,
}

impl Default for AntiDegenConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            beam: BeamModelConfig::default(),
            perturb_sigma: 0.0001,
            subsample: 4,
        }
    }
}

/// One instrumentation record per anti-degeneracy step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub t: f64,
    pub c: f64,
    pub phi: f64,
    pub rounds: usize,
    pub n_odom_selected: usize,
    pub n_lidar_selected: usize,
    /// Highest selected score over particles.
    pub best_score: f64,
}

impl StepLog {
    pub const HEADER: &'static str = "t,c,phi,rounds,n_odom_selected,n_lidar_selected,best_score";
}

impl fmt::Display for StepLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.6},{:.6},{:.6},{},{},{},{:.6}",
            self.t,
            self.c,
            self.phi,
            self.rounds,
            self.n_odom_selected,
            self.n_lidar_selected,
            self.best_score
        )
    }
}

/// Replaces the swarm after a failed scan match.
///
/// Enhanced resampling, one detector call on the resampled swarm, then per
/// particle a coarse/fine search from its pose, a choice between that pose
/// scored with `φ = 1` (odometry) and the searched pose scored with `φ(c)`
/// (lidar), and a log-likelihood weight update at the chosen pose.
/// Maps are left untouched.
pub fn anti_degeneracy_step(
    set: &mut ParticleSet,
    scan: &LidarScan,
    t: f64,
    detector: &mut dyn Detector,
    cfg: &AntiDegenConfig,
    seed: u64,
) -> Result<StepLog> {
    cfg.search.validate()?;
    if cfg.subsample == 0 {
        return Err(Error::Domain("subsample must be >= 1".into()));
    }
    set.normalize()?;
    *set = resample_enhanced(set, cfg.perturb_sigma, seed)?;
    let c = detector.level(set)?;
    let phi = trust_factor(c)?;
    let rounds = rounds_for(c, &cfg.search)?;
    let pts = ScanPoints::new(&scan.subsample(cfg.subsample));
    let mut log = StepLog {
        t,
        c,
        phi,
        rounds,
        n_odom_selected: 0,
        n_lidar_selected: 0,
        best_score: f64::NEG_INFINITY,
    };
    for p in set.particles_mut() {
        let map = &*p.map;
        let mut scorer = PoseScorer::new(map, &pts, &cfg.beam);
        let odom = ScoredPose {
            pose: p.pose,
            score: scorer.raw_score(&p.pose).0,
            source: Source::Odometry,
        };
        let (pose, raw) =
            coarse_fine_search_with(&p.pose, rounds, &cfg.search, |q| scorer.raw_score(q).0);
        let lidar = ScoredPose {
            pose,
            score: raw * phi,
            source: Source::Lidar,
        };
        let chosen = select_pose(odom, lidar);
        match chosen.source {
            Source::Odometry => log.n_odom_selected += 1,
            Source::Lidar => log.n_lidar_selected += 1,
        }
        log.best_score = log.best_score.max(chosen.score);
        p.pose = chosen.pose;
        p.log_weight += log_likelihood(map, &p.pose, scan, &cfg.beam);
    }
    set.normalize()?;
    Ok(log)
}
