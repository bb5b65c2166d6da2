use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pose::Pose;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose,
}

/// Time-stamped poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    samples: Vec<TimedPose>,
}

impl Trajectory {
    pub fn new(samples: Vec<TimedPose>) -> Result<Self> {
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Domain(format!(
                    "timestamps not strictly increasing at t={}",
                    w[1].t
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn push(&mut self, t: f64, pose: Pose) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if !(t > last.t) {
                return Err(Error::Domain(format!("timestamp {t} not after {}", last.t)));
            }
        }
        self.samples.push(TimedPose { t, pose });
        Ok(())
    }

    pub fn samples(&self) -> &[TimedPose] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.samples.iter().map(|s| &s.pose)
    }

    pub fn first(&self) -> Option<&TimedPose> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&TimedPose> {
        self.samples.last()
    }
}

/// Fixed-point rendering with trailing zeros trimmed (`1.0`, `0.25`).
fn fmt_num(v: f64) -> String {
    let mut s = format!("{v:.12}");
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    if s == "-0.0" {
        s = "0.0".into();
    }
    s
}

/// One TUM line `timestamp tx ty tz qx qy qz qw` for a planar pose.
pub fn format_tum_line(t: f64, pose: &Pose) -> String {
    let (qz, qw) = (pose.theta / 2.0).sin_cos();
    [t, pose.x, pose.y, 0.0, 0.0, 0.0, qz, qw]
        .iter()
        .map(|&v| fmt_num(v))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Whole TUM file with a comment header.
pub fn format_tum(traj: &Trajectory) -> Result<String> {
    if traj.is_empty() {
        return Err(Error::Domain(
            "refusing to write an empty trajectory".into(),
        ));
    }
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for s in &traj.samples {
        out.push_str(&format_tum_line(s.t, &s.pose));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_tum(traj: &Trajectory, path: &Path) -> Result<()> {
    let out = format_tum(traj)?;
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_tum(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut traj = Trajectory::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, idx + 1, "non-numeric field"))?;
        if v.len() != 8 {
            return Err(Error::parse(
                path,
                idx + 1,
                format!("expected 8 fields, found {}", v.len()),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(path, idx + 1, "non-finite value"));
        }
        let (qx, qy, qz, qw) = (v[4], v[5], v[6], v[7]);
        let yaw = (2.0 * (qw * qz + qx * qy)).atan2(1.0 - 2.0 * (qy * qy + qz * qz));
        traj.push(v[0], Pose::new(v[1], v[2], yaw))
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
    }
    Ok(traj)
}
