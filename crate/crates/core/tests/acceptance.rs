//! Acceptance suite: one PASS/FAIL line per criterion, run sequentially so
//! the timing checks see an otherwise idle machine.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use adslam_core::antidegen::{coarse_fine_search_with, rounds_for, trust_factor, SearchConfig};
use adslam_core::detect::image::accumulate;
use adslam_core::detect::model::batch_tensor;
use adslam_core::detect::*;
use adslam_core::eval::{ate_translational, mahalanobis_concentration_of};
use adslam_core::pipeline::{run_slam, simulate_sensors, SlamConfig, SENSOR_ODOMETRY_NOISE};
use adslam_core::rng::{derive, seeded, Rng};
use adslam_core::sim::{build_scenario, read_tum, write_tum, LidarSpec, ScenarioKind, Trajectory};
use adslam_core::slam::{
    resample_enhanced, resample_standard, GridParams, OccupancyGrid, Particle, ParticleSet,
};
use adslam_core::Pose;
use rand::Rng as _;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gauss(r: &mut Rng) -> f64 {
    r.sample(StandardNormal)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn c1_trust_factor() -> Outcome {
    let at_half = trust_factor(0.5).unwrap();
    let grid: Vec<f64> = (0..=1000)
        .map(|k| trust_factor(k as f64 / 1000.0).unwrap())
        .collect();
    let decreasing = grid.windows(2).all(|w| w[1] < w[0]);
    outcome(
        (at_half - 1.0).abs() <= 1e-12 && decreasing,
        format!(
            "phi(0.5)-1 = {:.1e}, strictly decreasing on 1001 points: {decreasing}",
            at_half - 1.0
        ),
    )
}

fn random_swarm(r: &mut Rng, spread: f64) -> Vec<(f64, f64)> {
    let n = r.random_range(1..=120);
    let (cx, cy) = (r.random_range(-50.0..50.0), r.random_range(-50.0..50.0));
    let (sx, sy) = (r.random_range(0.01..spread), r.random_range(0.01..spread));
    (0..n)
        .map(|_| (cx + sx * gauss(r), cy + sy * gauss(r)))
        .collect()
}

fn c2_mapping_invariance() -> Outcome {
    let cfg = MappingConfig::default();
    let mut r = seeded(2);
    let mut translated_equal = 0;
    let mut scaled_equal = 0;
    let mut scaled_total = 0;
    let t0 = Instant::now();
    for _ in 0..1000 {
        let swarm = random_swarm(&mut r, 12.0);
        let (tx, ty) = (r.random_range(-1e3..1e3), r.random_range(-1e3..1e3));
        let moved: Vec<_> = swarm.iter().map(|&(x, y)| (x + tx, y + ty)).collect();
        if linear_map(&swarm, &cfg).unwrap() == linear_map(&moved, &cfg).unwrap() {
            translated_equal += 1;
        }

        // spans at least canvas_m on both axes, scaled about the minimum
        let mut wide = swarm.clone();
        wide.push((swarm[0].0 + cfg.canvas_m, swarm[0].1 + cfg.canvas_m));
        wide.push((swarm[0].0 - 1.0, swarm[0].1 - 1.0));
        let lo_x = wide.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let lo_y = wide.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let a = r.random_range(1.0..8.0);
        let scaled: Vec<_> = wide
            .iter()
            .map(|&(x, y)| (lo_x + a * (x - lo_x), lo_y + a * (y - lo_y)))
            .collect();
        scaled_total += 1;
        if linear_map(&wide, &cfg).unwrap() == linear_map(&scaled, &cfg).unwrap() {
            scaled_equal += 1;
        }
    }
    let dt = t0.elapsed();
    outcome(
        translated_equal == 1000 && scaled_equal == scaled_total && dt < Duration::from_secs(1),
        format!(
            "translation {translated_equal}/1000 identical, ratio {scaled_equal}/{scaled_total} identical, {:.3}s",
            secs(dt)
        ),
    )
}

fn c3_augmentation() -> Outcome {
    let cfg = AugmentConfig::default();
    let s = 64;
    let mut worst: f64 = 0.0;
    let mut r = seeded(3);
    for _ in 0..200 {
        let (i, j) = (r.random_range(0..s), r.random_range(0..s));
        let acc = accumulate(&[(i, j)], s, &cfg);
        for y in 0..s {
            for x in 0..s {
                let (dx, dy) = (x as f64 - i as f64, y as f64 - j as f64);
                let expected = if dx.abs() <= 2.0 && dy.abs() <= 2.0 {
                    let s2 = cfg.sigma_px * cfg.sigma_px;
                    (-(dx * dx + dy * dy) / (2.0 * s2)).exp() / (2.0 * PI * s2)
                } else {
                    0.0
                };
                worst = worst.max((acc[y * s + x] - expected).abs());
            }
        }
    }
    let mut linear = true;
    for _ in 0..200 {
        let idx: Vec<(usize, usize)> = (0..r.random_range(1..30))
            .map(|_| (r.random_range(0..s), r.random_range(0..s)))
            .collect();
        let k = r.random_range(2..5);
        let dup: Vec<_> = (0..k).flat_map(|_| idx.iter().copied()).collect();
        let (a, b) = (accumulate(&idx, s, &cfg), accumulate(&dup, s, &cfg));
        linear &= a
            .iter()
            .zip(&b)
            .all(|(x, y)| (k as f64 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
    }
    outcome(
        worst <= 1e-12 && linear,
        format!("max splat error {worst:.1e}, duplication linear: {linear}"),
    )
}

fn c4_gradient_check() -> Outcome {
    let t0 = Instant::now();
    let samples =
        generate_synthetic_dataset(4, 3, &MappingConfig::default(), &AugmentConfig::default())
            .unwrap();
    let imgs: Vec<&[f64]> = samples.iter().map(|s| s.image.pixels.as_slice()).collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.label.index()).collect();
    let x = batch_tensor(&imgs, 64).unwrap();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..5u64 {
        let p = ModelParams::init(ModelConfig::default(), seed).unwrap();
        let g = gradient_check(&p, &x, &labels, 1e-4, 6, seed).unwrap();
        worst = worst.max(g.max_rel_error);
        checked += g.checked;
    }
    let dt = t0.elapsed();
    outcome(
        worst < 1e-4 && dt < Duration::from_secs(60),
        format!(
            "max relative error {worst:.2e} over {checked} coordinates, 5 seeds, {:.1}s",
            secs(dt)
        ),
    )
}

fn c5_training() -> Outcome {
    let t0 = Instant::now();
    let seed = 7;
    let samples = generate_synthetic_dataset(
        2000,
        seed,
        &MappingConfig::default(),
        &AugmentConfig::default(),
    )
    .unwrap();
    let split = split_indices(samples.len(), seed);
    let init = ModelParams::init(ModelConfig::default(), derive(seed, &[0x1417])).unwrap();
    let cfg = TrainConfig {
        seed,
        early_stop: Some((0.95, 0.93)),
        ..TrainConfig::default()
    };
    let out = train_with(init, &samples, &split, &cfg, |_| {}).unwrap();
    let dt = t0.elapsed();
    let hit = out
        .metrics
        .iter()
        .find(|m| m.val_acc >= 0.95 && m.val_f1 >= 0.93);
    let detail = match hit {
        Some(m) => format!(
            "split {}/{}/{}, epoch {}: val acc {:.4}, F1 {:.4}; {:.0}s",
            split.train.len(),
            split.val.len(),
            split.test.len(),
            m.epoch,
            m.val_acc,
            m.val_f1,
            secs(dt)
        ),
        None => format!(
            "no epoch reached acc 0.95 / F1 0.93 in {} epochs",
            out.metrics.len()
        ),
    };
    outcome(
        hit.is_some() && out.metrics.len() <= 30 && dt < Duration::from_secs(600),
        detail,
    )
}

fn c6_baseline_detector() -> Outcome {
    let mut r = seeded(6);
    let mut correct = 0;
    let total = 1000;
    for k in 0..total {
        let elongated = k % 2 == 1;
        let n = r.random_range(30..=100);
        let minor = r.random_range(0.05..0.5);
        let major = if elongated {
            minor * r.random_range(4.0..10.0)
        } else {
            minor
        };
        let rot = r.random_range(-PI..PI);
        let (s, c) = rot.sin_cos();
        let pos: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let (u, v) = (major * gauss(&mut r), minor * gauss(&mut r));
                (c * u - s * v, s * u + c * v)
            })
            .collect();
        let w: Vec<f64> = (0..n).map(|_| r.random_range(0.5..1.5)).collect();
        let level = detect_covariance_baseline(&pos, &w, 5.0).unwrap();
        if (level == 1.0) == elongated {
            correct += 1;
        }
    }
    let acc = correct as f64 / total as f64;
    outcome(
        acc >= 0.9,
        format!("accuracy {acc:.3} on {total} swarms at kappa 5"),
    )
}

fn set_from(poses: &[Pose], log_w: &[f64]) -> ParticleSet {
    let map = Arc::new(OccupancyGrid::new(GridParams::default(), 0.0, 0.0, 0.1, 0.1).unwrap());
    let mut s = ParticleSet::new(
        poses
            .iter()
            .zip(log_w)
            .map(|(&pose, &log_weight)| Particle {
                pose,
                log_weight,
                map: Arc::clone(&map),
            })
            .collect(),
    )
    .unwrap();
    s.normalize().unwrap();
    s
}

fn unique_positions(s: &ParticleSet) -> usize {
    let mut v: Vec<(u64, u64)> = s
        .particles()
        .iter()
        .map(|p| (p.pose.x.to_bits(), p.pose.y.to_bits()))
        .collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn c7_resampling() -> Outcome {
    let w = [0.05, 0.3, 0.1, 0.25, 0.02, 0.28];
    let n = w.len();
    let poses: Vec<Pose> = (0..n).map(|i| Pose::new(i as f64, 0.0, 0.0)).collect();
    let lw: Vec<f64> = w.iter().map(|x: &f64| x.ln()).collect();
    let set = set_from(&poses, &lw);
    let seeds = 10_000;
    let mut counts = vec![0usize; n];
    for seed in 0..seeds {
        for p in resample_standard(&set, seed).unwrap().particles() {
            counts[p.pose.x as usize] += 1;
        }
    }
    let dev = counts
        .iter()
        .zip(&w)
        .map(|(&c, &wi)| (c as f64 / (seeds as usize * n) as f64 - wi).abs())
        .fold(0.0, f64::max);

    let mut more = 0;
    let mut r = seeded(7);
    for seed in 0..100u64 {
        let n = 30;
        let poses: Vec<Pose> = (0..n)
            .map(|_| Pose::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), 0.0))
            .collect();
        let mut lw = vec![f64::NEG_INFINITY; n];
        lw[r.random_range(0..n)] = 0.0;
        let set = set_from(&poses, &lw);
        let std_u = unique_positions(&resample_standard(&set, seed).unwrap());
        let enh_u = unique_positions(&resample_enhanced(&set, 1e-4, seed).unwrap());
        more += (enh_u > std_u) as usize;
    }
    outcome(
        dev <= 0.02 && more >= 95,
        format!(
            "systematic max |freq - w| {dev:.4} over {seeds} seeds; enhanced more unique in {more}/100"
        ),
    )
}

fn c8_search() -> Outcome {
    let cfg = SearchConfig::default();
    let rounds = rounds_for(1.0, &cfg).unwrap();
    let mut r = seeded(8);
    let mut hits = 0;
    let mut monotone = true;
    for _ in 0..100 {
        let init = Pose::new(
            r.random_range(-5.0..5.0),
            r.random_range(-5.0..5.0),
            r.random_range(-PI..PI),
        );
        let dist = r.random_range(0.0..2.0 * cfg.delta_l);
        let dir = r.random_range(-PI..PI);
        let (ox, oy) = (init.x + dist * dir.cos(), init.y + dist * dir.sin());
        let ot = init.theta + r.random_range(-cfg.delta_a..cfg.delta_a);
        let (ax, ay) = (1.0, r.random_range(1.0..2.0));
        let rot = r.random_range(-PI..PI);
        let bump = r.random_bool(0.5);
        let field = move |p: &Pose| {
            let (dx, dy) = (p.x - ox, p.y - oy);
            let (s, c) = rot.sin_cos();
            let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
            let q = ax * u * u + ay * v * v + 0.01 * (p.theta - ot).powi(2);
            if bump {
                (-q / 0.05).exp()
            } else {
                -q
            }
        };
        let mut seen = Vec::new();
        let (pose, best) = coarse_fine_search_with(&init, rounds, &cfg, |p| {
            let v = field(p);
            seen.push(v);
            v
        });
        monotone &= best >= seen[0] && seen.iter().all(|&v| v <= best) && field(&pose) == best;

        // brute force over a fine lattice around the start
        let span = 4.0 * cfg.delta_l;
        let steps = 400;
        let h = 2.0 * span / steps as f64;
        let mut arg = (init.x, init.y);
        let mut top = f64::NEG_INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                let (x, y) = (init.x - span + i as f64 * h, init.y - span + j as f64 * h);
                let v = field(&Pose::new(x, y, ot));
                if v > top {
                    top = v;
                    arg = (x, y);
                }
            }
        }
        if (pose.x - arg.0).hypot(pose.y - arg.1) <= cfg.delta_l / 2.0 {
            hits += 1;
        }
    }
    outcome(
        hits >= 99 && monotone,
        format!("{hits}/100 within delta_l/2 of the brute-force argmax; monotone on every call: {monotone}"),
    )
}

struct Arm {
    ate: f64,
    end: f64,
}

fn run_arm(kind: ScenarioKind, scale: f64, seed: u64, on: bool) -> Arm {
    let (world, gt) = build_scenario(kind, scale).unwrap();
    let log = simulate_sensors(
        &world,
        &gt,
        &LidarSpec::default(),
        &SENSOR_ODOMETRY_NOISE,
        seed,
    )
    .unwrap();
    let cfg = SlamConfig {
        n_particles: 30,
        anti_degen: on,
        ..SlamConfig::default()
    };
    let mut det = CovarianceDetector::default();
    let run = run_slam(&gt, &log, &cfg, &mut det, seed, |_, _, _| Ok(())).unwrap();
    let ate = ate_translational(&run.estimate, &gt, false)
        .unwrap()
        .ate_rmse;
    let end = run
        .estimate
        .last()
        .unwrap()
        .pose
        .distance(&gt.last().unwrap().pose);
    Arm { ate, end }
}

fn c9_ab() -> Outcome {
    let t0 = Instant::now();
    let (mut off, mut on) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        off.push(run_arm(ScenarioKind::StraightCorridor, 30.0, seed, false).ate);
        on.push(run_arm(ScenarioKind::StraightCorridor, 30.0, seed, true).ate);
    }
    let (m_off, m_on) = (median(off), median(on));
    let straight_cut = 1.0 - m_on / m_off;

    let (mut e_off, mut e_on) = (Vec::new(), Vec::new());
    for seed in 0..3 {
        e_off.push(run_arm(ScenarioKind::CircularCorridor, 20.0, seed, false).end);
        e_on.push(run_arm(ScenarioKind::CircularCorridor, 20.0, seed, true).end);
    }
    let (l_off, l_on) = (median(e_off), median(e_on));
    let loop_cut = 1.0 - l_on / l_off;
    let dt = t0.elapsed();
    outcome(
        straight_cut >= 0.3 && loop_cut >= 0.3 && dt < Duration::from_secs(15 * 60),
        format!(
            "straight: median ATE OFF {m_off:.3} m, ON {m_on:.3} m ({:.1}% lower, 20 seeds); \
             circular: median endpoint error OFF {l_off:.3} m, ON {l_on:.3} m ({:.1}% lower, 3 seeds); {:.0}s",
            100.0 * straight_cut,
            100.0 * loop_cut,
            secs(dt)
        ),
    )
}

fn c10_indoor() -> Outcome {
    let (mut off, mut on) = (Vec::new(), Vec::new());
    for seed in 0..3 {
        off.push(run_arm(ScenarioKind::Indoor, 10.0, seed, false).ate);
        on.push(run_arm(ScenarioKind::Indoor, 10.0, seed, true).ate);
    }
    let (m_off, m_on) = (median(off), median(on));
    outcome(
        (m_on - m_off).abs() <= 0.1 * m_off,
        format!("median ATE OFF {m_off:.4} m, ON {m_on:.4} m (3 seeds)"),
    )
}

fn c11_mahalanobis() -> Outcome {
    let mut r = seeded(11);
    let n = 10_000;
    let rot = 0.7f64;
    let (s, c) = rot.sin_cos();
    let pos: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let (u, v) = (2.0 * gauss(&mut r), 0.5 * gauss(&mut r));
            (3.0 + c * u - s * v, -1.0 + s * u + c * v)
        })
        .collect();
    let w = vec![1.0; n];
    let got = mahalanobis_concentration_of(&pos, &w, 0.05).unwrap();
    outcome(
        (got.fraction - 0.95).abs() <= 0.01 && !got.singular,
        format!(
            "fraction {:.4} with {n} particles at alpha 0.05",
            got.fraction
        ),
    )
}

/// Reads a TUM file the way a standalone evaluation tool does, without this
/// crate's reader. Uses the `evo` package when it is importable.
fn external_tum_check(path: &Path) -> Result<String, String> {
    let script = "import sys, numpy as np\n\
from evo.core.trajectory import PoseTrajectory3D\n\
m = np.loadtxt(sys.argv[1], comments='#', ndmin=2)\n\
assert m.shape[1] == 8, m.shape\n\
t = PoseTrajectory3D(m[:, 1:4], np.roll(m[:, 4:], 1, axis=1), m[:, 0])\n\
assert t.check()[0], t.check()[1]\n\
print(t.num_poses)\n";
    if let Ok(out) = Command::new("python3")
        .arg("-c")
        .arg(script)
        .arg(path)
        .output()
    {
        if out.status.success() {
            return Ok(format!(
                "evo ({} poses)",
                String::from_utf8_lossy(&out.stdout).trim()
            ));
        }
        let err = String::from_utf8_lossy(&out.stderr);
        if !err.contains("ModuleNotFoundError") {
            return Err(format!("evo rejected {}: {err}", path.display()));
        }
    }
    strict_tum_parse(path).map(|n| format!("strict standalone parser ({n} poses)"))
}

/// Standalone TUM reader: 8 numeric fields per line, strictly increasing
/// timestamps, unit quaternions.
fn strict_tum_parse(path: &Path) -> Result<usize, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut last = f64::NEG_INFINITY;
    let mut n = 0;
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split(' ')
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", k + 1))?;
        if v.len() != 8 || v[0] <= last {
            return Err(format!("line {}: bad record", k + 1));
        }
        let qn = v[4..].iter().map(|q| q * q).sum::<f64>().sqrt();
        if (qn - 1.0).abs() > 1e-6 {
            return Err(format!("line {}: quaternion norm {qn}", k + 1));
        }
        last = v[0];
        n += 1;
    }
    Ok(n)
}

fn c12_ate_oracle() -> Outcome {
    let mut gt = Trajectory::default();
    let mut est = Trajectory::default();
    for k in 0..50 {
        let t = k as f64 * 0.1;
        let p = Pose::new(0.3 * t, (0.5 * t).sin(), 0.2 * t);
        gt.push(t, p).unwrap();
        est.push(t, Pose::new(p.x + 1.0, p.y, p.theta)).unwrap();
    }
    let raw = ate_translational(&est, &gt, false).unwrap().ate_rmse;
    let aligned = ate_translational(&est, &gt, true).unwrap().ate_rmse;

    let dir = tempfile::tempdir().unwrap();
    let mut notes = String::new();
    let mut parsed = true;
    for (name, traj) in [("estimate.tum", &est), ("groundtruth.tum", &gt)] {
        let path = dir.path().join(name);
        write_tum(traj, &path).unwrap();
        match external_tum_check(&path) {
            Ok(tool) => {
                let _ = write!(notes, " {name}: {tool};");
            }
            Err(e) => {
                parsed = false;
                let _ = write!(notes, " {name}: {e};");
            }
        }
        parsed &= read_tum(&path).unwrap().len() == traj.len();
    }
    outcome(
        (raw - 1.0).abs() <= 1e-9 && aligned.abs() <= 1e-9 && parsed,
        format!("unaligned {raw:.12}, aligned {aligned:.1e};{notes}"),
    )
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("trust factor exactness", c1_trust_factor),
        ("mapping invariances", c2_mapping_invariance),
        ("augmentation correctness", c3_augmentation),
        ("gradient check", c4_gradient_check),
        ("detector training", c5_training),
        ("baseline detector", c6_baseline_detector),
        ("resampling statistics", c7_resampling),
        ("search optimality", c8_search),
        ("end-to-end A/B", c9_ab),
        ("indoor non-regression", c10_indoor),
        ("Mahalanobis diagnostic", c11_mahalanobis),
        ("ATE oracle", c12_ate_oracle),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = (k + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let o = f();
        failed += (!o.pass) as usize;
        println!(
            "criterion {id:>2} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
