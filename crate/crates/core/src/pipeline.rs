//! End-to-end particle-filter SLAM on a simulated scenario.

use crate::antidegen::{anti_degeneracy_step, AntiDegenConfig, StepLog};
use crate::detect::Detector;
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::rng;
use crate::sim::{
    cast_scan, synthesize_odometry, LidarScan, LidarSpec, OdometryNoise, OdometryReading,
    Trajectory, WorldMap,
};
use crate::slam::{
    log_likelihood, map_update, motion_update, resample_standard, scanmatch, GridParams,
    OccupancyGrid, ParticleSet, ScanMatchConfig,
};

/// Odometry noise of the simulated robot.
pub const SENSOR_ODOMETRY_NOISE: OdometryNoise = OdometryNoise {
    rot_rot: 0.05,
    rot_trans: 0.01,
    trans_trans: 0.05,
    trans_rot: 0.01,
};

/// Sensor log of a scenario: one scan per ground-truth sample and one
/// odometry reading per consecutive pair.
#[derive(Debug, Clone)]
pub struct SensorLog {
    pub scans: Vec<LidarScan>,
    pub odometry: Vec<OdometryReading>,
}

/// Casts every scan and synthesizes every odometry reading of `gt`.
pub fn simulate_sensors(
    world: &WorldMap,
    gt: &Trajectory,
    lidar: &LidarSpec,
    noise: &OdometryNoise,
    seed: u64,
) -> Result<SensorLog> {
    let s = gt.samples();
    if s.is_empty() {
        return Err(Error::Usage("ground-truth trajectory is empty".into()));
    }
    let scans = s
        .iter()
        .enumerate()
        .map(|(k, p)| {
            cast_scan(
                world,
                &p.pose,
                lidar,
                rng::derive(seed, &[0x5CA7, k as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let odometry = s
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            synthesize_odometry(
                &w[0].pose,
                &w[1].pose,
                noise,
                rng::derive(seed, &[0x0D0, k as u64]),
            )
        })
        .collect();
    Ok(SensorLog { scans, odometry })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlamConfig {
    pub n_particles: usize,
    /// Noise the filter assumes when sampling the motion model.
    pub motion_noise: OdometryNoise,
    pub grid: GridParams,
    pub scanmatch: ScanMatchConfig,
    pub anti_degen: bool,
    pub anti: AntiDegenConfig,
    /// Standard resampling runs when `N_eff < resample_ratio · N`.
    pub resample_ratio: f64,
    /// Anti-degeneracy triggers when at least this share of particles
    /// failed to scan-match.
    pub trigger_ratio: f64,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            n_particles: 30,
            motion_noise: OdometryNoise::new(0.1, 0.01, 0.1, 0.01),
            grid: GridParams::default(),
            scanmatch: ScanMatchConfig::default(),
            anti_degen: true,
            anti: AntiDegenConfig::default(),
            resample_ratio: 0.5,
            trigger_ratio: 0.5,
        }
    }
}

impl SlamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::Usage("N must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.resample_ratio) || !(0.0..=1.0).contains(&self.trigger_ratio)
        {
            return Err(Error::Usage(
                "resample_ratio and trigger_ratio must lie in [0, 1]".into(),
            ));
        }
        self.scanmatch.validate()?;
        self.anti.search.validate()?;
        self.anti.beam.validate()
    }

    /// Matcher used by the filter. The flat-direction test is what reports
    /// a degenerate match as failed, so it is only active together with the
    /// anti-degeneracy path; without it the matcher behaves like a plain
    /// score-threshold matcher.
    pub fn effective_scanmatch(&self) -> ScanMatchConfig {
        ScanMatchConfig {
            plateau_check: self.scanmatch.plateau_check && self.anti_degen,
            ..self.scanmatch
        }
    }
}

#[derive(Debug, Clone)]
pub struct SlamRun {
    /// Weighted mean pose after each weight update.
    pub estimate: Trajectory,
    /// Map of the highest-weight particle at the end.
    pub map: OccupancyGrid,
    pub step_logs: Vec<StepLog>,
    /// Filter steps in which the anti-degeneracy path ran.
    pub triggered: usize,
    /// Particle-level scan-match failures summed over steps.
    pub match_failures: usize,
}

/// Runs the filter over `log`, starting from the known first ground-truth
/// pose. `on_step` sees the swarm after every step's weight update, before
/// resampling.
pub fn run_slam(
    gt: &Trajectory,
    log: &SensorLog,
    cfg: &SlamConfig,
    detector: &mut dyn Detector,
    seed: u64,
    mut on_step: impl FnMut(usize, f64, &ParticleSet) -> Result<()>,
) -> Result<SlamRun> {
    cfg.validate()?;
    let s = gt.samples();
    if s.is_empty() || log.scans.len() != s.len() || log.odometry.len() + 1 != s.len() {
        return Err(Error::Contract(
            "sensor log does not match the trajectory".into(),
        ));
    }
    let start = s[0].pose;
    let mut grid = OccupancyGrid::new(
        cfg.grid,
        start.x - 1.0,
        start.y - 1.0,
        start.x + 1.0,
        start.y + 1.0,
    )?;
    map_update(&mut grid, &start, &log.scans[0]);
    let mut set = ParticleSet::uniform(cfg.n_particles, start, grid)?;
    let mut estimate = Trajectory::default();
    estimate.push(s[0].t, start)?;
    on_step(0, s[0].t, &set)?;

    let sm_cfg = cfg.effective_scanmatch();
    let beam = cfg.anti.beam;
    let mut step_logs = Vec::new();
    let (mut triggered, mut match_failures) = (0, 0);
    for k in 1..s.len() {
        let t = s[k].t;
        let scan = &log.scans[k];
        let odom = &log.odometry[k - 1];
        let mut failed = 0;
        for (i, p) in set.particles_mut().iter_mut().enumerate() {
            let moved = motion_update(
                &p.pose,
                odom,
                &cfg.motion_noise,
                rng::derive(seed, &[0x30, k as u64, i as u64]),
            );
            let m = scanmatch(&p.map, &moved, scan, &sm_cfg, &beam);
            failed += (!m.success) as usize;
            p.pose = m.pose;
        }
        match_failures += failed;
        let trigger = cfg.anti_degen && failed as f64 >= cfg.trigger_ratio * set.len() as f64;
        if trigger {
            triggered += 1;
            let entry = anti_degeneracy_step(
                &mut set,
                scan,
                t,
                detector,
                &cfg.anti,
                rng::derive(seed, &[0xAD, k as u64]),
            )?;
            step_logs.push(entry);
        } else {
            for p in set.particles_mut() {
                p.log_weight += log_likelihood(&p.map, &p.pose, scan, &beam);
            }
            set.normalize()?;
        }
        on_step(k, t, &set)?;
        estimate.push(t, set.mean_pose()?)?;
        if set.effective_sample_size()? < cfg.resample_ratio * set.len() as f64 {
            set = resample_standard(&set, rng::derive(seed, &[0x8E, k as u64]))?;
        }
        for p in set.particles_mut() {
            let pose = p.pose;
            map_update(p.map_mut(), &pose, scan);
        }
        // map writes clear the flag; weights are untouched
        set.normalize()?;
    }
    let best = set.best_index();
    Ok(SlamRun {
        estimate,
        map: (*set.particles()[best].map).clone(),
        step_logs,
        triggered,
        match_failures,
    })
}

/// Estimated pose closest in time to `t`.
pub fn pose_at(traj: &Trajectory, t: f64) -> Option<Pose> {
    traj.samples()
        .iter()
        .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
        .map(|s| s.pose)
}
