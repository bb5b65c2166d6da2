use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use super::{Bounds, Segment, Trajectory, WorldMap};
use crate::error::{Error, Result};
use crate::pose::{angle_diff, Pose};
use crate::rng;

/// Control period of scripted trajectories (10 Hz).
pub const CONTROL_DT: f64 = 0.1;
/// Forward speed of scripted trajectories, m/s.
const SPEED: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    /// Cluttered square room.
    Indoor,
    /// Long 1 m wide corridor traversed lengthwise.
    StraightCorridor,
    /// Square annulus traversed once around.
    CircularCorridor,
    /// Unwalled area with a sparse set of small obstacles.
    OpenLandmarks,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Indoor,
        ScenarioKind::StraightCorridor,
        ScenarioKind::CircularCorridor,
        ScenarioKind::OpenLandmarks,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Indoor => "indoor",
            ScenarioKind::StraightCorridor => "straight_corridor",
            ScenarioKind::CircularCorridor => "circular_corridor",
            ScenarioKind::OpenLandmarks => "open_landmarks",
        }
    }

    fn min_scale(&self) -> f64 {
        match self {
            ScenarioKind::Indoor => 4.0,
            ScenarioKind::StraightCorridor => 3.0,
            ScenarioKind::CircularCorridor => 6.0,
            ScenarioKind::OpenLandmarks => 8.0,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown scenario `{s}`")))
    }
}

/// Corridor width of the circular scenario.
const LOOP_WIDTH: f64 = 1.5;

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> [Segment; 4] {
    [
        Segment::new(x0, y0, x1, y0),
        Segment::new(x1, y0, x1, y1),
        Segment::new(x1, y1, x0, y1),
        Segment::new(x0, y1, x0, y0),
    ]
}

/// Builds a world and its ground-truth trajectory, sampled at 10 Hz.
pub fn build_scenario(kind: ScenarioKind, scale: f64) -> Result<(WorldMap, Trajectory)> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Usage(format!("scale must be > 0, got {scale}")));
    }
    if scale < kind.min_scale() {
        return Err(Error::Usage(format!(
            "scale {scale} too small for {kind} (minimum {})",
            kind.min_scale()
        )));
    }
    let (world, path) = match kind {
        ScenarioKind::Indoor => indoor(scale)?,
        ScenarioKind::StraightCorridor => straight_corridor(scale)?,
        ScenarioKind::CircularCorridor => circular_corridor(scale)?,
        ScenarioKind::OpenLandmarks => open_landmarks(scale)?,
    };
    Ok((world, sample_path(&path, SPEED * CONTROL_DT)?))
}

fn indoor(s: f64) -> Result<(WorldMap, Vec<(f64, f64)>)> {
    let k = s / 10.0;
    let mut segs: Vec<Segment> = rect(0.0, 0.0, s, s).to_vec();
    let boxes = [
        (4.0, 4.0, 6.0, 5.0),
        (3.0, 6.5, 3.4, 6.9),
        (6.8, 2.6, 7.2, 3.0),
        (8.9, 0.3, 9.6, 0.9),
        (0.3, 9.0, 1.0, 9.6),
    ];
    for (x0, y0, x1, y1) in boxes {
        segs.extend(rect(x0 * k, y0 * k, x1 * k, y1 * k));
    }
    let stubs = [
        (3.0, 0.0, 3.0, 0.8),
        (10.0, 6.0, 9.2, 6.0),
        (6.5, 10.0, 6.5, 9.1),
        (0.0, 4.0, 0.9, 4.0),
    ];
    for (x0, y0, x1, y1) in stubs {
        segs.push(Segment::new(x0 * k, y0 * k, x1 * k, y1 * k));
    }
    let wp = [(1.5, 1.5), (8.5, 1.5), (8.5, 8.5), (1.5, 8.5)].map(|(x, y)| (x * k, y * k));
    let world = WorldMap::new(
        segs,
        Bounds {
            min_x: 0.0,
            min_y: 0.0,
            max_x: s,
            max_y: s,
        },
    )?;
    Ok((world, rounded_loop(&wp, 1.0 * k)))
}

fn straight_corridor(len: f64) -> Result<(WorldMap, Vec<(f64, f64)>)> {
    let world = WorldMap::new(
        rect(0.0, 0.0, len, 1.0).to_vec(),
        Bounds {
            min_x: 0.0,
            min_y: 0.0,
            max_x: len,
            max_y: 1.0,
        },
    )?;
    Ok((world, dense_line((1.0, 0.5), (len - 1.0, 0.5))))
}

fn circular_corridor(s: f64) -> Result<(WorldMap, Vec<(f64, f64)>)> {
    let w = LOOP_WIDTH;
    let mut segs = rect(0.0, 0.0, s, s).to_vec();
    segs.extend(rect(w, w, s - w, s - w));
    let world = WorldMap::new(
        segs,
        Bounds {
            min_x: 0.0,
            min_y: 0.0,
            max_x: s,
            max_y: s,
        },
    )?;
    let h = w / 2.0;
    let wp = [(h, h), (s - h, h), (s - h, s - h), (h, s - h)];
    Ok((world, rounded_loop(&wp, h)))
}

fn open_landmarks(s: f64) -> Result<(WorldMap, Vec<(f64, f64)>)> {
    let margin = 2.0;
    let wp = [
        (margin, margin),
        (s - margin, margin),
        (s - margin, s - margin),
        (margin, s - margin),
    ];
    let path = rounded_loop(&wp, 1.5);
    let mut rng = rng::seeded(0x1A4D_3A4C);
    let spacing = 4.0;
    let half = 0.15;
    let mut segs = Vec::new();
    let cells = (s / spacing).floor() as usize;
    for i in 0..cells {
        for j in 0..cells {
            let cx = (i as f64 + 0.5) * spacing + rng.random_range(-1.0..1.0);
            let cy = (j as f64 + 0.5) * spacing + rng.random_range(-1.0..1.0);
            let clear = path.iter().all(|&(px, py)| (px - cx).hypot(py - cy) > 0.8);
            let inside = cx - half > 0.0 && cy - half > 0.0 && cx + half < s && cy + half < s;
            if clear && inside {
                segs.extend(rect(cx - half, cy - half, cx + half, cy + half));
            }
        }
    }
    let world = WorldMap::new(
        segs,
        Bounds {
            min_x: 0.0,
            min_y: 0.0,
            max_x: s,
            max_y: s,
        },
    )?;
    Ok((world, path))
}

const DENSE_STEP: f64 = 0.005;

fn dense_line(a: (f64, f64), b: (f64, f64)) -> Vec<(f64, f64)> {
    let len = (b.0 - a.0).hypot(b.1 - a.1);
    let n = (len / DENSE_STEP).ceil().max(1.0) as usize;
    (0..=n)
        .map(|k| {
            let f = k as f64 / n as f64;
            (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1))
        })
        .collect()
}

/// Closed polygon with circular fillets of `radius` at each vertex, starting
/// and ending at the midpoint of the first edge.
fn rounded_loop(wp: &[(f64, f64)], radius: f64) -> Vec<(f64, f64)> {
    let n = wp.len();
    let mid = ((wp[0].0 + wp[1].0) / 2.0, (wp[0].1 + wp[1].1) / 2.0);
    let mut out = vec![mid];
    let mut cursor = mid;
    for step in 1..=n {
        let prev = wp[(step - 1) % n];
        let corner = wp[step % n];
        let next = wp[(step + 1) % n];
        let (p_in, arc, p_out) = fillet(prev, corner, next, radius);
        out.extend(dense_line(cursor, p_in).into_iter().skip(1));
        out.extend(arc);
        cursor = p_out;
    }
    out.extend(dense_line(cursor, mid).into_iter().skip(1));
    out
}

fn fillet(
    prev: (f64, f64),
    corner: (f64, f64),
    next: (f64, f64),
    radius: f64,
) -> ((f64, f64), Vec<(f64, f64)>, (f64, f64)) {
    let unit = |a: (f64, f64), b: (f64, f64)| {
        let l = (b.0 - a.0).hypot(b.1 - a.1);
        ((b.0 - a.0) / l, (b.1 - a.1) / l)
    };
    let u_in = unit(prev, corner);
    let u_out = unit(corner, next);
    let turn = angle_diff(u_out.1.atan2(u_out.0), u_in.1.atan2(u_in.0));
    let d = radius * (turn.abs() / 2.0).tan();
    let p_in = (corner.0 - d * u_in.0, corner.1 - d * u_in.1);
    let p_out = (corner.0 + d * u_out.0, corner.1 + d * u_out.1);
    let side = turn.signum();
    let center = (
        p_in.0 - side * radius * u_in.1,
        p_in.1 + side * radius * u_in.0,
    );
    let a0 = (p_in.1 - center.1).atan2(p_in.0 - center.0);
    let steps = ((radius * turn.abs()) / DENSE_STEP).ceil().max(1.0) as usize;
    let arc = (1..=steps)
        .map(|k| {
            let a = a0 + turn * k as f64 / steps as f64;
            (center.0 + radius * a.cos(), center.1 + radius * a.sin())
        })
        .collect();
    (p_in, arc, p_out)
}

/// Resamples a dense polyline at fixed arc-length spacing; headings follow the tangent.
fn sample_path(dense: &[(f64, f64)], spacing: f64) -> Result<Trajectory> {
    let mut cum = vec![0.0];
    for w in dense.windows(2) {
        cum.push(cum.last().unwrap() + (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1));
    }
    let total = *cum.last().unwrap();
    let count = (total / spacing).floor() as usize;
    let mut traj = Trajectory::default();
    let mut seg = 0;
    for k in 0..=count {
        let s = k as f64 * spacing;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let (a, b) = (dense[seg], dense[seg + 1]);
        let l = cum[seg + 1] - cum[seg];
        let f = if l > 0.0 {
            ((s - cum[seg]) / l).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let heading = (b.1 - a.1).atan2(b.0 - a.0);
        let pose = Pose::new(a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1), heading);
        traj.push(k as f64 * CONTROL_DT, pose)?;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inside_all(world: &WorldMap, traj: &Trajectory) -> bool {
        traj.poses().all(|p| world.bounds().contains(p.x, p.y))
    }

    /// No wall within `clearance` of any trajectory pose.
    fn clear_of_walls(world: &WorldMap, traj: &Trajectory, clearance: f64) -> bool {
        traj.poses().all(|p| {
            world.segments().iter().all(|s| {
                let (ex, ey) = (s.x2 - s.x1, s.y2 - s.y1);
                let l2 = ex * ex + ey * ey;
                let t = (((p.x - s.x1) * ex + (p.y - s.y1) * ey) / l2).clamp(0.0, 1.0);
                (p.x - s.x1 - t * ex).hypot(p.y - s.y1 - t * ey) > clearance
            })
        })
    }

    #[test]
    fn straight_corridor_layout() {
        let (w, t) = build_scenario(ScenarioKind::StraightCorridor, 30.0).unwrap();
        let b = w.bounds();
        assert_eq!((b.width(), b.height()), (30.0, 1.0));
        assert!(inside_all(&w, &t));
        assert!(t
            .poses()
            .all(|p| (p.y - 0.5).abs() < 1e-12 && p.theta.abs() < 1e-12));
        assert!(clear_of_walls(&w, &t, 0.4));
        assert!(t.last().unwrap().pose.x > 28.0);
    }

    #[test]
    fn indoor_is_ten_by_ten() {
        let (w, t) = build_scenario(ScenarioKind::Indoor, 10.0).unwrap();
        assert_eq!((w.bounds().width(), w.bounds().height()), (10.0, 10.0));
        assert!(inside_all(&w, &t));
        assert!(clear_of_walls(&w, &t, 0.3));
    }

    #[test]
    fn circular_corridor_closes_loop() {
        let (w, t) = build_scenario(ScenarioKind::CircularCorridor, 20.0).unwrap();
        let first = t.first().unwrap().pose;
        let last = t.last().unwrap().pose;
        assert!(first.distance(&last) < 1.0);
        assert!(inside_all(&w, &t));
        assert!(clear_of_walls(&w, &t, 0.3));
        assert!(t.len() > 600);
    }

    #[test]
    fn open_landmarks_are_sparse() {
        let (w, t) = build_scenario(ScenarioKind::OpenLandmarks, 24.0).unwrap();
        assert!(inside_all(&w, &t));
        assert!(clear_of_walls(&w, &t, 0.5));
        let n_boxes = w.segments().len() / 4;
        assert!((4..=36).contains(&n_boxes), "{n_boxes} landmarks");
    }

    #[test]
    fn timestamps_at_ten_hertz() {
        let (_, t) = build_scenario(ScenarioKind::Indoor, 10.0).unwrap();
        for w in t.samples().windows(2) {
            assert!((w[1].t - w[0].t - CONTROL_DT).abs() < 1e-9);
            assert!(w[0].pose.distance(&w[1].pose) <= SPEED * CONTROL_DT + 1e-9);
        }
    }

    #[test]
    fn bad_inputs_are_usage_errors() {
        assert!(matches!(
            "warehouse".parse::<ScenarioKind>(),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            build_scenario(ScenarioKind::Indoor, 0.0),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            build_scenario(ScenarioKind::Indoor, -3.0),
            Err(Error::Usage(_))
        ));
    }
}
