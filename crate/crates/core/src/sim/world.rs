use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Segment {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    /// Ray parameter `s ≥ 0` at which `origin + s·dir` meets the segment, if any.
    pub fn intersect_ray(&self, ox: f64, oy: f64, dx: f64, dy: f64) -> Option<f64> {
        let ex = self.x2 - self.x1;
        let ey = self.y2 - self.y1;
        let denom = dx * ey - dy * ex;
        if denom.abs() < 1e-15 {
            // Parallel (or collinear): collinear overlaps are treated as grazing misses.
            return None;
        }
        let wx = self.x1 - ox;
        let wy = self.y1 - oy;
        let s = (wx * ey - wy * ex) / denom;
        let u = (wx * dy - wy * dx) / denom;
        if s >= 0.0 && (0.0..=1.0).contains(&u) {
            Some(s)
        } else {
            None
        }
    }
}

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

/// A world made of line segments inside a bounding rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    segments: Vec<Segment>,
    bounds: Bounds,
}

impl WorldMap {
    pub fn new(segments: Vec<Segment>, bounds: Bounds) -> Result<Self> {
        if !(bounds.min_x < bounds.max_x && bounds.min_y < bounds.max_y) {
            return Err(Error::Domain(format!("degenerate bounds {bounds:?}")));
        }
        let eps = 1e-9;
        for s in &segments {
            let pts = [(s.x1, s.y1), (s.x2, s.y2)];
            for (x, y) in pts {
                if !x.is_finite() || !y.is_finite() {
                    return Err(Error::Domain(format!("non-finite segment endpoint {s:?}")));
                }
                if x < bounds.min_x - eps
                    || x > bounds.max_x + eps
                    || y < bounds.min_y - eps
                    || y > bounds.max_y + eps
                {
                    return Err(Error::Domain(format!("segment {s:?} leaves bounds")));
                }
            }
        }
        Ok(Self { segments, bounds })
    }

    /// Builds a world whose bounds are the bounding box of its segments.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Domain("world has no segments and no bounds".into()));
        }
        let mut b = Bounds {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for s in &segments {
            b.min_x = b.min_x.min(s.x1).min(s.x2);
            b.min_y = b.min_y.min(s.y1).min(s.y2);
            b.max_x = b.max_x.max(s.x1).max(s.x2);
            b.max_y = b.max_y.max(s.y1).max(s.y2);
        }
        Self::new(segments, b)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    /// Distance along the ray to the closest segment, `None` when nothing is hit.
    pub fn raycast(&self, ox: f64, oy: f64, angle: f64) -> Option<f64> {
        let (dy, dx) = angle.sin_cos();
        self.segments
            .iter()
            .filter_map(|s| s.intersect_ray(ox, oy, dx, dy))
            .min_by(|a, b| a.total_cmp(b))
    }
}

/// Writes `x1 y1 x2 y2` lines. Bounds go into a `# bounds` comment line.
pub fn write_world(world: &WorldMap, path: &Path) -> Result<()> {
    let b = world.bounds;
    let mut out = String::from("# x1 y1 x2 y2 (meters)\n");
    out.push_str(&format!(
        "# bounds {} {} {} {}\n",
        b.min_x, b.min_y, b.max_x, b.max_y
    ));
    for s in &world.segments {
        out.push_str(&format!("{} {} {} {}\n", s.x1, s.y1, s.x2, s.y2));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_world(path: &Path) -> Result<WorldMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut segments = Vec::new();
    let mut bounds = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let mut it = comment.split_whitespace();
            if it.next() == Some("bounds") {
                let v: Vec<f64> = it
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(path, idx + 1, "malformed bounds directive"))?;
                if v.len() != 4 {
                    return Err(Error::parse(path, idx + 1, "bounds needs 4 values"));
                }
                bounds = Some(Bounds {
                    min_x: v[0],
                    min_y: v[1],
                    max_x: v[2],
                    max_y: v[3],
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, idx + 1, "expected numbers"))?;
        if v.len() != 4 {
            return Err(Error::parse(path, idx + 1, "expected `x1 y1 x2 y2`"));
        }
        segments.push(Segment::new(v[0], v[1], v[2], v[3]));
    }
    match bounds {
        Some(b) => WorldMap::new(segments, b),
        None => WorldMap::from_segments(segments),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_hits_segment() {
        let s = Segment::new(5.0, -1.0, 5.0, 1.0);
        assert_eq!(s.intersect_ray(0.0, 0.0, 1.0, 0.0), Some(5.0));
        assert_eq!(s.intersect_ray(0.0, 0.0, -1.0, 0.0), None);
        assert_eq!(s.intersect_ray(0.0, 2.0, 1.0, 0.0), None);
    }

    #[test]
    fn rejects_segments_outside_bounds() {
        let b = Bounds {
            min_x: 0.0,
            min_y: 0.0,
            max_x: 1.0,
            max_y: 1.0,
        };
        assert!(WorldMap::new(vec![Segment::new(0.0, 0.0, 2.0, 0.0)], b).is_err());
        assert!(WorldMap::new(vec![Segment::new(0.0, f64::NAN, 1.0, 0.0)], b).is_err());
    }

    #[test]
    fn file_round_trip_keeps_bounds() {
        let b = Bounds {
            min_x: -1.0,
            min_y: -2.0,
            max_x: 10.0,
            max_y: 5.0,
        };
        let w = WorldMap::new(vec![Segment::new(0.0, 0.0, 1.5, 0.25)], b).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.txt");
        write_world(&w, &p).unwrap();
        assert_eq!(read_world(&p).unwrap(), w);
    }

    #[test]
    fn malformed_line_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.txt");
        fs::write(&p, "# c\n0 0 1 1\n0 0 1\n").unwrap();
        match read_world(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
