use super::beam::{BeamModelConfig, PoseScorer, ScanPoints};
use super::grid::OccupancyGrid;
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::sim::LidarScan;

/// Hill-climbing matcher settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanMatchConfig {
    /// Initial translation step, m.
    pub linear_step: f64,
    /// Initial rotation step, rad.
    pub angular_step: f64,
    /// Number of times the steps are halved before stopping.
    pub refinements: usize,
    /// Upper bound on accepted moves.
    pub max_moves: usize,
    /// Use every `subsample`-th beam.
    pub subsample: usize,
    /// Success needs a mean per-beam score of at least this.
    pub score_min: f64,
    /// Also fail when the score surface is flat in some direction.
    pub plateau_check: bool,
    /// Probe distance for the curvature test, m.
    pub plateau_probe: f64,
    /// Smallest mean per-beam score drop at `plateau_probe` along the
    /// flattest direction for the match to count as constrained.
    pub plateau_min_drop: f64,
}

impl Default for ScanMatchConfig {
    fn default() -> Self {
        Self {
            linear_step: 0.1,
            angular_step: 0.05,
            refinements: 4,
            max_moves: 200,
            subsample: 4,
            score_min: 0.55,
            plateau_check: true,
            plateau_probe: 0.1,
            plateau_min_drop: 0.2,
        }
    }
}

impl ScanMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.linear_step > 0.0 && self.angular_step > 0.0) {
            return Err(Error::Domain("scanmatch steps must be > 0".into()));
        }
        if self.subsample == 0 {
            return Err(Error::Domain("scanmatch subsample must be >= 1".into()));
        }
        if !(self.plateau_probe > 0.0) {
            return Err(Error::Domain("plateau_probe must be > 0".into()));
        }
        Ok(())
    }

    /// Translation step after the last refinement.
    pub fn finest_linear_step(&self) -> f64 {
        self.linear_step / f64::powi(2.0, self.refinements as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanMatchResult {
    pub pose: Pose,
    /// Unscaled score at `pose` over the subsampled beams.
    pub score: f64,
    pub success: bool,
    /// Returning beams that entered the score.
    pub beams: usize,
}

/// Mean per-beam score drop at distance `h` along the flattest translation
/// direction, from a finite-difference Hessian of the score around `pose`.
pub fn plateau_drop(
    map: &OccupancyGrid,
    pose: &Pose,
    scan: &LidarScan,
    beam: &BeamModelConfig,
    h: f64,
) -> f64 {
    let pts = ScanPoints::new(scan);
    plateau_drop_with(&mut PoseScorer::new(map, &pts, beam), pose, h)
}

fn plateau_drop_with(scorer: &mut PoseScorer, pose: &Pose, h: f64) -> f64 {
    let n = scorer.len();
    let mut f = |dx: f64, dy: f64| scorer.raw_score(&pose.offset(dx, dy, 0.0)).0;
    if n == 0 {
        return 0.0;
    }
    let f0 = f(0.0, 0.0);
    let fxx = f(h, 0.0) + f(-h, 0.0) - 2.0 * f0;
    let fyy = f(0.0, h) + f(0.0, -h) - 2.0 * f0;
    let fxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / 4.0;
    // curvature matrix C = -H·h², take its smaller eigenvalue
    let (a, b, c) = (-fxx, -fxy, -fyy);
    let lam_min = 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt();
    lam_min / (2.0 * n as f64)
}

/// Greedy hill climbing on `Σ (s_i + exp(-ψ_i²/σ))` from `init`.
///
/// Tries the eight compass moves in the robot frame and ± rotation,
/// takes the best strict improvement, and halves the steps when none helps.
/// On failure the returned pose is `init`.
pub fn scanmatch(
    map: &OccupancyGrid,
    init: &Pose,
    scan: &LidarScan,
    cfg: &ScanMatchConfig,
    beam: &BeamModelConfig,
) -> ScanMatchResult {
    let scan = scan.subsample(cfg.subsample);
    let fail = |score| ScanMatchResult {
        pose: *init,
        score,
        success: false,
        beams: 0,
    };
    if map.occupied_count() == 0 {
        return fail(0.0);
    }
    let pts = ScanPoints::new(&scan);
    let mut scorer = PoseScorer::new(map, &pts, beam);
    let mut score = |p: &Pose| scorer.raw_score(p);
    let (mut best, n) = score(init);
    if n == 0 {
        return fail(0.0);
    }
    let mut pose = *init;
    let (mut lin, mut ang) = (cfg.linear_step, cfg.angular_step);
    let mut refinements = 0;
    let mut moves = 0;
    while refinements <= cfg.refinements && moves < cfg.max_moves {
        let (s, c) = pose.theta.sin_cos();
        let d = lin * std::f64::consts::FRAC_1_SQRT_2;
        let mv =
            |f: f64, l: f64| Pose::new(pose.x + f * c - l * s, pose.y + f * s + l * c, pose.theta);
        let candidates = [
            mv(lin, 0.0),
            mv(-lin, 0.0),
            mv(0.0, lin),
            mv(0.0, -lin),
            mv(d, d),
            mv(d, -d),
            mv(-d, d),
            mv(-d, -d),
            Pose::new(pose.x, pose.y, pose.theta + ang),
            Pose::new(pose.x, pose.y, pose.theta - ang),
        ];
        let mut improved = None;
        let mut top = best;
        for cand in candidates {
            let v = score(&cand).0;
            if v > top {
                top = v;
                improved = Some(cand);
            }
        }
        match improved {
            Some(p) => {
                pose = p;
                best = top;
                moves += 1;
            }
            None => {
                refinements += 1;
                lin *= 0.5;
                ang *= 0.5;
            }
        }
    }
    let mut success = best >= cfg.score_min * n as f64;
    if success && cfg.plateau_check {
        success = plateau_drop_with(&mut scorer, &pose, cfg.plateau_probe) >= cfg.plateau_min_drop;
    }
    if success {
        ScanMatchResult {
            pose,
            score: best,
            success,
            beams: n,
        }
    } else {
        ScanMatchResult {
            pose: *init,
            score: best,
            success,
            beams: n,
        }
    }
}
