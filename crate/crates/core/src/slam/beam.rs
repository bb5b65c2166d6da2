use rustc_hash::FxHashMap;

use super::grid::{log_odds_to_prob, OccupancyGrid};
use super::particles::Particle;
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::sim::LidarScan;

/// Endpoint likelihood model shared by weighting and scan scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamModelConfig {
    /// Kernel width σ in `exp(-ψ²/σ)`, m².
    pub sigma_hit: f64,
    /// Search radius for the nearest occupied cell, in cells.
    pub hit_search_radius: usize,
    /// Lower bound for per-beam likelihoods and the score of non-occupied endpoints.
    pub p_miss_floor: f64,
}

impl Default for BeamModelConfig {
    fn default() -> Self {
        Self {
            sigma_hit: 0.01,
            hit_search_radius: 4,
            p_miss_floor: 0.1,
        }
    }
}

impl BeamModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_hit > 0.0) {
            return Err(Error::Domain("sigma_hit must be > 0".into()));
        }
        if !(self.p_miss_floor > 0.0 && self.p_miss_floor < 1.0) {
            return Err(Error::Domain("p_miss_floor must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// `exp(-ψ²/σ)`, zero for ψ = ∞.
    #[inline]
    pub fn kernel(&self, psi: f64) -> f64 {
        if psi.is_finite() {
            (-psi * psi / self.sigma_hit).exp()
        } else {
            0.0
        }
    }

    /// Per-beam measurement likelihood, floored at `p_miss_floor`.
    #[inline]
    pub fn likelihood(&self, psi: f64) -> f64 {
        self.kernel(psi).max(self.p_miss_floor)
    }
}

/// Score terms of one returning beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamScore {
    pub beam: usize,
    /// Occupancy probability of the endpoint cell, or the miss floor when
    /// that cell is not occupied.
    pub s: f64,
    /// Distance from the endpoint to the nearest occupied cell within the
    /// search radius; infinite if there is none.
    pub psi: f64,
}

/// Distance from `(x, y)` to the closest occupied cell within `radius` cells,
/// measured to each cell's [`OccupancyGrid::cell_point`].
pub fn nearest_occupied(map: &OccupancyGrid, x: f64, y: f64, radius: usize) -> f64 {
    nearest_from(map, map.locate(x, y), x, y, radius)
}

/// Lowers `best2` to the squared distance from `(x, y)` to any occupied cell
/// point in the rectangle.
#[inline(always)]
fn closer_in_rect(
    map: &OccupancyGrid,
    (x, y): (f64, f64),
    best2: &mut f64,
    is: (i64, i64),
    js: (i64, i64),
) {
    map.visit_occupied_rect(is, js, |cx, cy| {
        let d2 = (cx - x) * (cx - x) + (cy - y) * (cy - y);
        if d2 < *best2 {
            *best2 = d2;
        }
    })
}

#[inline]
fn nearest_from(
    map: &OccupancyGrid,
    (ci, cj, fx, fy): (i64, i64, f64, f64),
    x: f64,
    y: f64,
    radius: usize,
) -> f64 {
    let res = map.resolution();
    let mut best2 = f64::INFINITY;
    if let Some((cx, cy)) = map.occupied_point(ci, cj) {
        best2 = (cx - x) * (cx - x) + (cy - y) * (cy - y);
    }
    let p = (x, y);
    for r in 1..=radius as i64 {
        // lower bound on the distance to any point of each side of ring r
        let near = |f: f64| {
            let d = ((r - 1) as f64 + f) * res;
            d * d <= best2
        };
        let (below, above, left, right) = (near(fy), near(1.0 - fy), near(fx), near(1.0 - fx));
        if !(below || above || left || right) {
            break;
        }
        let (row, col) = ((ci - r, ci + r), (cj - r + 1, cj + r - 1));
        if below {
            closer_in_rect(map, p, &mut best2, row, (cj - r, cj - r));
        }
        if above {
            closer_in_rect(map, p, &mut best2, row, (cj + r, cj + r));
        }
        if left {
            closer_in_rect(map, p, &mut best2, (ci - r, ci - r), col);
        }
        if right {
            closer_in_rect(map, p, &mut best2, (ci + r, ci + r), col);
        }
    }
    best2.sqrt()
}

#[inline]
fn beam_score_at(map: &OccupancyGrid, x: f64, y: f64, cfg: &BeamModelConfig) -> (f64, f64) {
    let loc = map.locate(x, y);
    let s = match map.occupied_log_odds(loc.0, loc.1) {
        Some(l) => log_odds_to_prob(l),
        None => cfg.p_miss_floor,
    };
    (s, nearest_from(map, loc, x, y, cfg.hit_search_radius))
}

/// Per-beam `(s_i, ψ_i)` for every returning beam of `scan` placed at `pose`.
pub fn beam_scores(
    map: &OccupancyGrid,
    pose: &Pose,
    scan: &LidarScan,
    cfg: &BeamModelConfig,
) -> Vec<BeamScore> {
    scan.hit_endpoints(pose)
        .map(|(beam, x, y)| {
            let (s, psi) = beam_score_at(map, x, y, cfg);
            BeamScore { beam, s, psi }
        })
        .collect()
}

/// Unscaled match score `Σ (s_i + exp(-ψ_i²/σ))` and the number of beams used.
pub fn raw_score(
    map: &OccupancyGrid,
    pose: &Pose,
    scan: &LidarScan,
    cfg: &BeamModelConfig,
) -> (f64, usize) {
    ScanPoints::new(scan).raw_score(map, pose, cfg)
}

/// Robot-frame endpoints of the returning beams of a scan, for scoring the
/// same scan at many poses.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoints {
    local: Vec<(f64, f64)>,
}

impl ScanPoints {
    pub fn new(scan: &LidarScan) -> Self {
        Self {
            local: scan
                .hit_endpoints(&Pose::default())
                .map(|(_, x, y)| (x, y))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty()
    }

    /// Same value as [`raw_score`] up to rounding.
    pub fn raw_score(
        &self,
        map: &OccupancyGrid,
        pose: &Pose,
        cfg: &BeamModelConfig,
    ) -> (f64, usize) {
        let (s, c) = pose.theta.sin_cos();
        let mut total = 0.0;
        for &(px, py) in &self.local {
            let (x, y) = (pose.x + c * px - s * py, pose.y + s * px + c * py);
            let (si, psi) = beam_score_at(map, x, y, cfg);
            total += si + cfg.kernel(psi);
        }
        (total, self.local.len())
    }
}

/// Scores one scan against one map at many poses. Per grid cell it keeps the
/// occupancy term and the occupied cell points within the search radius, so
/// repeated queries near earlier poses skip the neighbourhood scan. Scores
/// equal [`ScanPoints::raw_score`].
pub struct PoseScorer<'a> {
    map: &'a OccupancyGrid,
    pts: &'a ScanPoints,
    cfg: BeamModelConfig,
    /// Cell to (occupancy term, range into `points`).
    cells: FxHashMap<(i64, i64), (f64, u32, u32)>,
    points: Vec<(f64, f64)>,
}

impl<'a> PoseScorer<'a> {
    pub fn new(map: &'a OccupancyGrid, pts: &'a ScanPoints, cfg: &BeamModelConfig) -> Self {
        Self {
            map,
            pts,
            cfg: *cfg,
            cells: FxHashMap::default(),
            points: Vec::new(),
        }
    }

    pub fn map(&self) -> &'a OccupancyGrid {
        self.map
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// Unscaled match score at `pose` and the number of beams used.
    pub fn raw_score(&mut self, pose: &Pose) -> (f64, usize) {
        let (s, c) = pose.theta.sin_cos();
        let mut total = 0.0;
        for &(px, py) in &self.pts.local {
            let (x, y) = (pose.x + c * px - s * py, pose.y + s * px + c * py);
            let (ci, cj) = self.map.cell_of(x, y);
            let (si, a, b) = *self.cells.entry((ci, cj)).or_insert_with(|| {
                let si = match self.map.occupied_log_odds(ci, cj) {
                    Some(l) => log_odds_to_prob(l),
                    None => self.cfg.p_miss_floor,
                };
                let r = self.cfg.hit_search_radius as i64;
                let a = self.points.len() as u32;
                let points = &mut self.points;
                self.map
                    .visit_occupied_rect((ci - r, ci + r), (cj - r, cj + r), |px, py| {
                        points.push((px, py))
                    });
                (si, a, self.points.len() as u32)
            });
            let mut best2 = f64::INFINITY;
            for &(cx, cy) in &self.points[a as usize..b as usize] {
                let d2 = (cx - x) * (cx - x) + (cy - y) * (cy - y);
                if d2 < best2 {
                    best2 = d2;
                }
            }
            total += si + self.cfg.kernel(best2.sqrt());
        }
        (total, self.pts.len())
    }
}

/// `Σ_j log p(z_j | x)` over returning beams.
pub fn log_likelihood(
    map: &OccupancyGrid,
    pose: &Pose,
    scan: &LidarScan,
    cfg: &BeamModelConfig,
) -> f64 {
    scan.hit_endpoints(pose)
        .map(|(_, x, y)| {
            cfg.likelihood(nearest_occupied(map, x, y, cfg.hit_search_radius))
                .ln()
        })
        .sum()
}

/// Log-space likelihood of precomputed beam terms.
pub fn log_likelihood_of(scores: &[BeamScore], cfg: &BeamModelConfig) -> f64 {
    scores.iter().map(|b| cfg.likelihood(b.psi).ln()).sum()
}

/// Returns the particle's log weight after multiplying in the scan likelihood.
pub fn weight_update(particle: &Particle, scan: &LidarScan, cfg: &BeamModelConfig) -> f64 {
    particle.log_weight + log_likelihood(&particle.map, &particle.pose, scan, cfg)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::slam::grid::GridParams;

    fn grid_with(cells: &[(i64, i64)]) -> OccupancyGrid {
        let mut g = OccupancyGrid::new(GridParams::default(), 0.0, 0.0, 2.0, 2.0).unwrap();
        for &(i, j) in cells {
            g.set_log_odds(i, j, 5.0);
        }
        g
    }

    fn scan_to(points: &[(f64, f64)], from: &Pose) -> LidarScan {
        let mut s = LidarScan::empty(10.0);
        for &(x, y) in points {
            s.ranges.push((x - from.x).hypot(y - from.y));
            s.angles.push((y - from.y).atan2(x - from.x) - from.theta);
            s.hit.push(true);
        }
        s
    }

    #[test]
    fn exact_hit_has_unit_kernel() {
        let g = grid_with(&[(10, 10)]);
        let (cx, cy) = g.cell_center(10, 10);
        let pose = Pose::new(0.3, 0.2, 0.0);
        let b = beam_scores(
            &g,
            &pose,
            &scan_to(&[(cx, cy)], &pose),
            &BeamModelConfig::default(),
        );
        assert!(b[0].psi < 1e-12);
        assert!((BeamModelConfig::default().kernel(b[0].psi) - 1.0).abs() < 1e-12);
        assert!((b[0].s - crate::slam::grid::log_odds_to_prob(5.0)).abs() < 1e-6);
    }

    #[test]
    fn unexplored_endpoint_hits_floor() {
        let g = grid_with(&[]);
        let pose = Pose::new(0.3, 0.2, 0.0);
        let cfg = BeamModelConfig::default();
        let b = beam_scores(&g, &pose, &scan_to(&[(1.0, 1.0)], &pose), &cfg);
        assert_eq!(b[0].s, cfg.p_miss_floor);
        assert!(b[0].psi.is_infinite());
        assert_eq!(cfg.kernel(b[0].psi), 0.0);
        assert_eq!(cfg.likelihood(b[0].psi), cfg.p_miss_floor);
    }

    #[test]
    fn one_cell_away_kernel() {
        let g = grid_with(&[(10, 10)]);
        let (cx, cy) = g.cell_center(10, 10);
        let pose = Pose::new(0.3, 0.2, 0.0);
        let cfg = BeamModelConfig::default();
        let b = beam_scores(&g, &pose, &scan_to(&[(cx + 0.05, cy)], &pose), &cfg);
        assert!((b[0].psi - 0.05).abs() < 1e-9);
        assert!((cfg.kernel(b[0].psi) - (-0.25f64).exp()).abs() < 1e-9);
        assert!((cfg.kernel(b[0].psi) - 0.7788).abs() < 1e-4);
        assert_eq!(b[0].s, cfg.p_miss_floor);
    }

    #[test]
    fn nearest_search_respects_radius() {
        let g = grid_with(&[(10, 10)]);
        let (cx, cy) = g.cell_center(10, 10);
        assert!(nearest_occupied(&g, cx + 0.2, cy, 4).is_finite());
        assert!(nearest_occupied(&g, cx + 0.25, cy, 4).is_infinite());
        // diagonal neighbours in an outer ring can beat axis ones in an inner ring
        let g2 = grid_with(&[(10, 13), (12, 12)]);
        let (tx, ty) = g2.cell_center(10, 10);
        let d = nearest_occupied(&g2, tx + 0.024, ty + 0.024, 4);
        let (ax, ay) = g2.cell_center(12, 12);
        assert!((d - (ax - tx - 0.024).hypot(ay - ty - 0.024)).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn nearest_matches_brute_force(
            cells in proptest::collection::vec((0i64..40, 0i64..40), 0..30),
            x in -0.3f64..2.3,
            y in -0.3f64..2.3,
            radius in 0usize..6,
        ) {
            let g = grid_with(&cells);
            let (ci, cj) = g.cell_of(x, y);
            let r = radius as i64;
            let brute = cells
                .iter()
                .filter(|&&(i, j)| (i - ci).abs() <= r && (j - cj).abs() <= r)
                .map(|&(i, j)| {
                    let (px, py) = g.cell_point(i, j);
                    (px - x) * (px - x) + (py - y) * (py - y)
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            proptest::prop_assert_eq!(nearest_occupied(&g, x, y, radius), brute);
        }
    }

    #[test]
    fn weight_update_examples() {
        let cfg = BeamModelConfig::default();
        let g = grid_with(&[(10, 10)]);
        let (cx, cy) = g.cell_center(10, 10);
        let pose = Pose::new(0.3, 0.2, 0.0);
        let mut p = Particle {
            pose,
            log_weight: -1.5,
            map: Arc::new(g),
        };

        // perfect hit: likelihood 1, weight unchanged
        let hit = scan_to(&[(cx, cy)], &pose);
        assert!((weight_update(&p, &hit, &cfg) + 1.5).abs() < 1e-12);

        // ψ chosen so the kernels evaluate to 0.5 and 0.25
        let d_half = (cfg.sigma_hit * 2f64.ln()).sqrt();
        let d_quarter = (cfg.sigma_hit * 4f64.ln()).sqrt();
        let two = scan_to(&[(cx + d_half, cy), (cx, cy - d_quarter)], &pose);
        let got = weight_update(&p, &two, &cfg) + 1.5;
        assert!((got - 0.125f64.ln()).abs() < 1e-9, "{got}");

        // empty scan
        assert_eq!(weight_update(&p, &LidarScan::empty(10.0), &cfg), -1.5);

        // far from anything: floored, finite
        p.pose = Pose::new(1.9, 1.9, 0.0);
        let far = scan_to(&[(1.95, 0.05); 500], &p.pose);
        let lw = weight_update(&p, &far, &cfg);
        assert!(lw.is_finite());
        assert!((lw - (-1.5 + 500.0 * cfg.p_miss_floor.ln())).abs() < 1e-9);
    }
}
