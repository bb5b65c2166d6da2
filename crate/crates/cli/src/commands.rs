//! Subcommand implementations. Inputs and outputs resolve against `out`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use adslam_core::antidegen::StepLog;
use adslam_core::detect::{
    dataset::sample_from_swarm, generate_synthetic_dataset, read_dataset, split_indices,
    train_with, write_dataset, Label, ModelConfig, ModelParams,
};
use adslam_core::eval::{
    ate_residuals, export_run, format_errors_csv, report_from, AteReport, RunArtifacts,
    ASSOC_TOLERANCE, ERRORS_CSV,
};
use adslam_core::pipeline::{run_slam, simulate_sensors, SensorLog};
use adslam_core::rng;
use adslam_core::sim::{build_scenario, read_tum, write_tum, write_world, Trajectory};
use adslam_core::slam::{read_dump, write_dump, ParticleSet, SwarmDump};
use adslam_core::{Error, Result};

use crate::config::{RunConfig, Source};

pub const CONFIG_ECHO: &str = "config.txt";
pub const METRICS_CSV: &str = "metrics.csv";
pub const STEPS_CSV: &str = "steps.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const DETECT_CSV: &str = "detect.csv";

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

/// Creates `out` and writes the resolved configuration into it.
pub fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<()> {
    create_dir(out)?;
    write(&out.join(CONFIG_ECHO), cfg.echo())
}

fn require<'a>(v: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    v.as_ref()
        .ok_or_else(|| Error::Usage(format!("missing required key `{key}`")))
}

fn format_scans(gt: &Trajectory, log: &SensorLog) -> String {
    let mut out = String::from("# t then one range per beam, `-` for no return\n");
    for (s, scan) in gt.samples().iter().zip(&log.scans) {
        out.push_str(&s.t.to_string());
        for (r, hit) in scan.ranges.iter().zip(&scan.hit) {
            if *hit {
                let _ = write!(out, " {r}");
            } else {
                out.push_str(" -");
            }
        }
        out.push('\n');
    }
    out
}

fn format_odometry(gt: &Trajectory, log: &SensorLog) -> String {
    let mut out = String::from("# t delta_r1 delta_t delta_r2\n");
    for (s, o) in gt.samples()[1..].iter().zip(&log.odometry) {
        let _ = writeln!(out, "{} {} {} {}", s.t, o.delta_r1, o.delta_t, o.delta_r2);
    }
    out
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<String> {
    let kind = cfg.require_scenario()?;
    let (world, gt) = build_scenario(kind, cfg.scale)?;
    let log = simulate_sensors(&world, &gt, &cfg.lidar, &cfg.odom_noise, cfg.seed)?;
    write_world(&world, &out.join("world.txt"))?;
    write_tum(&gt, &out.join("groundtruth.tum"))?;
    write(&out.join("scans.txt"), format_scans(&gt, &log))?;
    write(&out.join("odometry.txt"), format_odometry(&gt, &log))?;
    let b = world.bounds();
    Ok(format!(
        "scenario={kind} bounds={}x{} samples={}",
        b.width(),
        b.height(),
        gt.len()
    ))
}

fn dump_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |source| Error::Io {
        path: dir.into(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let p = entry.map_err(io)?.path();
        if p.is_file() {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn normalized_weights(dump: &SwarmDump) -> Vec<f64> {
    let m = dump.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
    dump.iter().map(|d| (d.1 - m).exp()).collect()
}

pub fn dataset(cfg: &RunConfig, out: &Path) -> Result<String> {
    let samples = match &cfg.source {
        Source::Synthetic => {
            if cfg.n == 0 {
                return Err(Error::Usage("`n` must be >= 1".into()));
            }
            generate_synthetic_dataset(cfg.n, cfg.seed, &cfg.mapping, &cfg.augment)?
        }
        Source::Dumps(dir) => dump_files(&out.join(dir))?
            .iter()
            .map(|f| {
                let d = read_dump(f)?;
                let pos: Vec<(f64, f64)> = d.iter().map(|(p, _)| (p.x, p.y)).collect();
                sample_from_swarm(&pos, &normalized_weights(&d), &cfg.mapping, &cfg.augment)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    if samples.is_empty() {
        return Err(Error::Usage("dataset source holds no swarms".into()));
    }
    let split = split_indices(samples.len(), cfg.seed);
    write_dataset(&out.join(&cfg.dataset), &samples, &split)?;
    let degenerate = samples
        .iter()
        .filter(|s| s.label == Label::Degenerate)
        .count();
    Ok(format!(
        "samples={} train={} val={} test={} degenerate={}",
        samples.len(),
        split.train.len(),
        split.val.len(),
        split.test.len(),
        degenerate
    ))
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<String> {
    let dir = out.join(&cfg.dataset);
    if !dir.join("labels.csv").is_file() {
        return Err(Error::Usage(format!(
            "no dataset at {} (run `dataset` first)",
            dir.display()
        )));
    }
    let (samples, split) = read_dataset(&dir, cfg.seed)?;
    let model = ModelConfig {
        size_px: cfg.mapping.size_px,
        ..ModelConfig::default()
    };
    let init = ModelParams::init(model, rng::derive(cfg.seed, &[0x1417]))?;
    let tc = adslam_core::detect::TrainConfig {
        seed: cfg.seed,
        ..cfg.train
    };
    let mut csv = String::from("epoch,train_loss,val_acc,val_f1\n");
    let outcome = train_with(init, &samples, &split, &tc, |m| {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            m.epoch, m.train_loss, m.val_acc, m.val_f1
        );
        eprintln!(
            "epoch {:>3} loss {:.4} val_acc {:.4} val_f1 {:.4}",
            m.epoch, m.train_loss, m.val_acc, m.val_f1
        );
    })?;
    write(&out.join(METRICS_CSV), csv)?;
    outcome.params.save(&out.join(&cfg.model))?;
    let best = outcome.best_epoch.map_or("none".into(), |e| e.to_string());
    Ok(format!(
        "best_epoch={best} test_acc={} test_f1={}",
        outcome.test_acc, outcome.test_f1
    ))
}

pub fn detect(cfg: &RunConfig, out: &Path) -> Result<String> {
    let target = out.join(require(&cfg.swarm, "swarm")?);
    let files = if target.is_dir() {
        dump_files(&target)?
    } else {
        vec![target]
    };
    let mut det = cfg
        .detector
        .build(&out.join(&cfg.model), cfg.mapping, cfg.augment)?;
    let mut csv = String::from("file,c\n");
    for f in &files {
        let set = ParticleSet::from_dump(&read_dump(f)?)?;
        let c = det.level(&set)?;
        let name = f.file_name().map_or(f.display().to_string(), |n| {
            n.to_string_lossy().into_owned()
        });
        let _ = writeln!(csv, "{name},{c}");
    }
    write(&out.join(DETECT_CSV), &csv)?;
    Ok(csv.trim_end().to_string())
}

fn format_report(r: &AteReport) -> String {
    format!(
        "ate_rmse={}\nerror_x={}\nerror_y={}\nn_pairs={}\n",
        r.ate_rmse, r.error_x, r.error_y, r.n_pairs
    )
}

pub fn slam(cfg: &RunConfig, out: &Path) -> Result<String> {
    let kind = cfg.require_scenario()?;
    let mut det = cfg
        .detector
        .build(&out.join(&cfg.model), cfg.mapping, cfg.augment)?;
    let (world, gt) = build_scenario(kind, cfg.scale)?;
    let log = simulate_sensors(&world, &gt, &cfg.lidar, &cfg.odom_noise, cfg.seed)?;
    let dumps = out.join("particles");
    if cfg.dump_every > 0 {
        create_dir(&dumps)?;
    }
    let run = run_slam(&gt, &log, &cfg.slam, det.as_mut(), cfg.seed, |k, _, set| {
        if cfg.dump_every > 0 && k % cfg.dump_every == 0 {
            write_dump(set, &dumps.join(format!("step_{k:06}.txt")))?;
        }
        Ok(())
    })?;
    export_run(
        &RunArtifacts {
            map: &run.map,
            estimate: &run.estimate,
            ground_truth: &gt,
        },
        out,
    )?;
    let mut steps = format!("{}\n", StepLog::HEADER);
    for s in &run.step_logs {
        let _ = writeln!(steps, "{s}");
    }
    write(&out.join(STEPS_CSV), steps)?;
    let report = report_from(&ate_residuals(&run.estimate, &gt, false, ASSOC_TOLERANCE)?);
    let text = format!(
        "{}triggered={}\nmatch_failures={}\n",
        format_report(&report),
        run.triggered,
        run.match_failures
    );
    write(&out.join(REPORT_TXT), &text)?;
    Ok(text.trim_end().replace('\n', " "))
}

pub fn eval(cfg: &RunConfig, out: &Path) -> Result<String> {
    let est = read_tum(&out.join(require(&cfg.est, "est")?))?;
    let gt = read_tum(&out.join(require(&cfg.gt, "gt")?))?;
    let res = ate_residuals(&est, &gt, cfg.align, ASSOC_TOLERANCE)?;
    write(&out.join(ERRORS_CSV), format_errors_csv(&res))?;
    let text = format_report(&report_from(&res));
    write(&out.join(REPORT_TXT), &text)?;
    Ok(text.trim_end().replace('\n', " "))
}
