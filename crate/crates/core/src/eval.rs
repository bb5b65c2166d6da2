//! Trajectory error metrics, the Mahalanobis concentration diagnostic and
//! run exporters.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pgm;
use crate::pose::Pose;
use crate::sim::{format_tum, Trajectory};
use crate::slam::{OccupancyGrid, ParticleSet};

/// Default timestamp association tolerance, s.
pub const ASSOC_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteReport {
    pub ate_rmse: f64,
    /// Mean absolute x residual.
    pub error_x: f64,
    /// Mean absolute y residual.
    pub error_y: f64,
    pub n_pairs: usize,
}

/// Position residual `est - gt` at the ground-truth timestamp `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub t: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Residual {
    pub fn norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

/// Pairs every estimate sample with the nearest ground-truth sample within
/// `tol` seconds.
pub fn associate(est: &Trajectory, gt: &Trajectory, tol: f64) -> Vec<(Pose, Pose, f64)> {
    let g = gt.samples();
    let mut out = Vec::new();
    if g.is_empty() {
        return out;
    }
    for e in est.samples() {
        let k = g.partition_point(|s| s.t < e.t);
        let mut best: Option<usize> = None;
        for cand in [k.checked_sub(1), Some(k)].into_iter().flatten() {
            if cand < g.len() && best.is_none_or(|b| (g[cand].t - e.t).abs() < (g[b].t - e.t).abs())
            {
                best = Some(cand);
            }
        }
        if let Some(b) = best {
            if (g[b].t - e.t).abs() <= tol {
                out.push((e.pose, g[b].pose, g[b].t));
            }
        }
    }
    out
}

/// Least-squares rigid motion `(θ, tx, ty)` taking the `from` points onto `to`.
pub fn fit_se2(from: &[(f64, f64)], to: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = from.len() as f64;
    let mean = |v: &[(f64, f64)]| {
        let (sx, sy) = v.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        (sx / n, sy / n)
    };
    let (fa, ta) = (mean(from), mean(to));
    let (mut sc, mut ss) = (0.0, 0.0);
    for (a, b) in from.iter().zip(to) {
        let (ax, ay) = (a.0 - fa.0, a.1 - fa.1);
        let (bx, by) = (b.0 - ta.0, b.1 - ta.1);
        sc += ax * bx + ay * by;
        ss += ax * by - ay * bx;
    }
    let th = if sc == 0.0 && ss == 0.0 {
        0.0
    } else {
        ss.atan2(sc)
    };
    let (s, c) = th.sin_cos();
    (
        th,
        ta.0 - (c * fa.0 - s * fa.1),
        ta.1 - (s * fa.0 + c * fa.1),
    )
}

/// Per-pair residuals, after the optional rigid alignment of the estimate.
pub fn ate_residuals(
    est: &Trajectory,
    gt: &Trajectory,
    align: bool,
    tol: f64,
) -> Result<Vec<Residual>> {
    let pairs = associate(est, gt, tol);
    if pairs.is_empty() {
        return Err(Error::Domain(format!(
            "no estimate/ground-truth pairs within {tol} s"
        )));
    }
    let (th, tx, ty) = if align {
        let from: Vec<(f64, f64)> = pairs.iter().map(|(e, _, _)| (e.x, e.y)).collect();
        let to: Vec<(f64, f64)> = pairs.iter().map(|(_, g, _)| (g.x, g.y)).collect();
        fit_se2(&from, &to)
    } else {
        (0.0, 0.0, 0.0)
    };
    let (s, c) = th.sin_cos();
    Ok(pairs
        .iter()
        .map(|(e, g, t)| {
            let (x, y) = (c * e.x - s * e.y + tx, s * e.x + c * e.y + ty);
            Residual {
                t: *t,
                dx: x - g.x,
                dy: y - g.y,
            }
        })
        .collect())
}

pub fn report_from(res: &[Residual]) -> AteReport {
    let n = res.len() as f64;
    AteReport {
        ate_rmse: (res.iter().map(|r| r.dx * r.dx + r.dy * r.dy).sum::<f64>() / n).sqrt(),
        error_x: res.iter().map(|r| r.dx.abs()).sum::<f64>() / n,
        error_y: res.iter().map(|r| r.dy.abs()).sum::<f64>() / n,
        n_pairs: res.len(),
    }
}

/// Translational ATE with the default association tolerance.
pub fn ate_translational(est: &Trajectory, gt: &Trajectory, align: bool) -> Result<AteReport> {
    ate_translational_with(est, gt, align, ASSOC_TOLERANCE)
}

pub fn ate_translational_with(
    est: &Trajectory,
    gt: &Trajectory,
    align: bool,
    tol: f64,
) -> Result<AteReport> {
    Ok(report_from(&ate_residuals(est, gt, align, tol)?))
}

/// `χ²` critical value with two degrees of freedom at level `α`.
pub fn chi2_2dof_critical(alpha: f64) -> f64 {
    -2.0 * alpha.ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concentration {
    pub fraction: f64,
    /// The positional covariance was singular; `fraction` is then 1.
    pub singular: bool,
}

/// Share of particles whose squared Mahalanobis distance from the weighted
/// mean position (weighted 2D covariance) is within `χ²_{2,1-α}`.
pub fn mahalanobis_concentration_of(
    positions: &[(f64, f64)],
    weights: &[f64],
    alpha: f64,
) -> Result<Concentration> {
    if positions.len() < 4 {
        return Err(Error::Contract(
            "concentration needs at least 4 particles".into(),
        ));
    }
    if positions.len() != weights.len() {
        return Err(Error::Contract(
            "positions and weights differ in length".into(),
        ));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1]")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Domain(
            "weights must be non-negative with a positive sum".into(),
        ));
    }
    let (mut mx, mut my) = (0.0, 0.0);
    for (p, w) in positions.iter().zip(weights) {
        mx += w * p.0;
        my += w * p.1;
    }
    mx /= total;
    my /= total;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (p, w) in positions.iter().zip(weights) {
        let (dx, dy) = (p.0 - mx, p.1 - my);
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    sxx /= total;
    sxy /= total;
    syy /= total;
    let det = sxx * syy - sxy * sxy;
    let tr = sxx + syy;
    if !(det > 1e-12 * tr * tr) || tr == 0.0 {
        return Ok(Concentration {
            fraction: 1.0,
            singular: true,
        });
    }
    let crit = chi2_2dof_critical(alpha);
    let inside = positions
        .iter()
        .filter(|p| {
            let (dx, dy) = (p.0 - mx, p.1 - my);
            (syy * dx * dx - 2.0 * sxy * dx * dy + sxx * dy * dy) / det <= crit
        })
        .count();
    Ok(Concentration {
        fraction: inside as f64 / positions.len() as f64,
        singular: false,
    })
}

pub fn mahalanobis_concentration(set: &ParticleSet, alpha: f64) -> Result<Concentration> {
    let lw = set.log_weights();
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|l| (l - m).exp()).collect();
    mahalanobis_concentration_of(&set.positions(), &w, alpha)
}

pub const ERRORS_HEADER: &str = "t,error_x,error_y,error_euclid";

/// Error-vs-time CSV, absolute per-axis residuals.
pub fn format_errors_csv(res: &[Residual]) -> String {
    let mut out = format!("{ERRORS_HEADER}\n");
    for r in res {
        let _ = writeln!(
            out,
            "{:.6},{:.9},{:.9},{:.9}",
            r.t,
            r.dx.abs(),
            r.dy.abs(),
            r.norm()
        );
    }
    out
}

const SVG_SIZE: f64 = 800.0;
const SVG_MARGIN: f64 = 40.0;

/// Overlay of ground truth (black) and estimate (red) in a fixed 800×800
/// view box, equal axis scaling, +y up.
pub fn render_svg(est: &Trajectory, gt: &Trajectory) -> String {
    let pts = est.poses().chain(gt.poses());
    let (mut x0, mut y0, mut x1, mut y1) = (
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    );
    for p in pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let k = (SVG_SIZE - 2.0 * SVG_MARGIN) / span;
    let polyline = |t: &Trajectory, color: &str| {
        let mut s =
            format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"");
        for (i, p) in t.poses().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(
                s,
                "{:.2},{:.2}",
                SVG_MARGIN + (p.x - x0) * k,
                SVG_SIZE - SVG_MARGIN - (p.y - y0) * k
            );
        }
        s.push_str("\"/>\n");
        s
    };
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {SVG_SIZE} {SVG_SIZE}\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\">\n"
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&polyline(gt, "black"));
    out.push_str(&polyline(est, "red"));
    out.push_str("</svg>\n");
    out
}

pub const MAP_PGM: &str = "map.pgm";
pub const MAP_META: &str = "map.txt";
pub const ESTIMATE_TUM: &str = "estimate.tum";
pub const GROUND_TRUTH_TUM: &str = "groundtruth.tum";
pub const ERRORS_CSV: &str = "errors.csv";
pub const PLOT_SVG: &str = "trajectories.svg";

/// What a finished run leaves behind.
pub struct RunArtifacts<'a> {
    pub map: &'a OccupancyGrid,
    pub estimate: &'a Trajectory,
    pub ground_truth: &'a Trajectory,
}

/// Writes the map (PGM + sidecar), both trajectories (TUM), the unaligned
/// error CSV and the SVG overlay. Everything is rendered before the first
/// write, and files already written are removed if a later write fails.
pub fn export_run(art: &RunArtifacts<'_>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if art.estimate.is_empty() || art.ground_truth.is_empty() {
        return Err(Error::Domain("cannot export an empty trajectory".into()));
    }
    let res = ate_residuals(art.estimate, art.ground_truth, false, ASSOC_TOLERANCE)?;
    let files: [(&str, Vec<u8>); 6] = [
        (MAP_PGM, pgm::encode(&art.map.to_image())),
        (MAP_META, art.map.meta_text().into_bytes()),
        (ESTIMATE_TUM, format_tum(art.estimate)?.into_bytes()),
        (GROUND_TRUTH_TUM, format_tum(art.ground_truth)?.into_bytes()),
        (ERRORS_CSV, format_errors_csv(&res).into_bytes()),
        (
            PLOT_SVG,
            render_svg(art.estimate, art.ground_truth).into_bytes(),
        ),
    ];
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_all_or_none(out_dir, &files)
}

/// Writes every `(name, bytes)` under `dir`, rolling back on the first failure.
pub fn write_all_or_none(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, bytes) in files {
        let p = dir.join(name);
        if let Err(e) = fs::write(&p, bytes) {
            for w in &written {
                let _ = fs::remove_file(w);
            }
            return Err(Error::io(&p, e));
        }
        written.push(p);
    }
    Ok(written)
}
