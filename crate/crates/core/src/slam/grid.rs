use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pgm::{self, GrayImage};
use crate::pose::Pose;
use crate::sim::LidarScan;

/// Log-odds increments, clamps and the occupancy threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    pub resolution: f64,
    pub l_occ: f64,
    pub l_free: f64,
    pub l_min: f64,
    pub l_max: f64,
    /// Cells with occupancy probability above this count as occupied.
    pub occupied_p: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            l_occ: (0.7f64 / 0.3).ln(),
            l_free: (0.4f64 / 0.6).ln(),
            l_min: -5.0,
            l_max: 5.0,
            occupied_p: 0.65,
        }
    }
}

impl GridParams {
    pub fn occupied_log_odds(&self) -> f64 {
        (self.occupied_p / (1.0 - self.occupied_p)).ln()
    }
}

pub fn log_odds_to_prob(l: f64) -> f64 {
    1.0 - 1.0 / (1.0 + l.exp())
}

/// Log-odds occupancy grid. Cell `(i, j)` covers
/// `[ox + i·res, ox + (i+1)·res) × [oy + j·res, oy + (j+1)·res)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    params: GridParams,
    origin_x: f64,
    origin_y: f64,
    width: usize,
    height: usize,
    cells: Vec<f32>,
    /// Per-cell sum of hit offsets from the cell center and hit count.
    hits: Vec<HitAcc>,
    occ_threshold: f32,
    n_occupied: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct HitAcc {
    sx: f32,
    sy: f32,
    n: u32,
}

/// Extra room added around the requested extent whenever the grid grows.
const GROW_MARGIN_M: f64 = 2.0;

impl OccupancyGrid {
    /// Empty (all unknown) grid covering `[min_x, max_x] × [min_y, max_y]`.
    pub fn new(params: GridParams, min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        if !(params.resolution > 0.0) {
            return Err(Error::Domain("grid resolution must be > 0".into()));
        }
        if !(params.l_min < 0.0 && params.l_max > 0.0) {
            return Err(Error::Domain("log-odds clamp must straddle 0".into()));
        }
        if !(max_x > min_x && max_y > min_y) {
            return Err(Error::Domain("grid extent is empty".into()));
        }
        let width = ((max_x - min_x) / params.resolution).ceil() as usize;
        let height = ((max_y - min_y) / params.resolution).ceil() as usize;
        Ok(Self {
            occ_threshold: params.occupied_log_odds() as f32,
            params,
            origin_x: min_x,
            origin_y: min_y,
            width,
            height,
            cells: vec![0.0; width * height],
            hits: vec![HitAcc::default(); width * height],
            n_occupied: 0,
        })
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn resolution(&self) -> f64 {
        self.params.resolution
    }

    pub fn origin(&self) -> Pose {
        Pose::new(self.origin_x, self.origin_y, 0.0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Cell containing a world point (may lie outside the grid).
    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        let r = self.params.resolution;
        (
            floor_i64((x - self.origin_x) / r),
            floor_i64((y - self.origin_y) / r),
        )
    }

    /// Cell containing a world point and the point's fractional position
    /// inside it, each in `[0, 1)`.
    #[inline]
    pub fn locate(&self, x: f64, y: f64) -> (i64, i64, f64, f64) {
        let r = self.params.resolution;
        let (u, v) = ((x - self.origin_x) / r, (y - self.origin_y) / r);
        let (i, j) = (floor_i64(u), floor_i64(v));
        (i, j, u - i as f64, v - j as f64)
    }

    pub fn cell_center(&self, i: i64, j: i64) -> (f64, f64) {
        let r = self.params.resolution;
        (
            self.origin_x + (i as f64 + 0.5) * r,
            self.origin_y + (j as f64 + 0.5) * r,
        )
    }

    /// Representative point of a cell: the mean of the beam endpoints that
    /// marked it, or its center when it has none.
    #[inline]
    pub fn cell_point(&self, i: i64, j: i64) -> (f64, f64) {
        let (cx, cy) = self.cell_center(i, j);
        match self.index(i, j).map(|k| self.hits[k]) {
            Some(h) if h.n > 0 => (cx + h.sx as f64 / h.n as f64, cy + h.sy as f64 / h.n as f64),
            _ => (cx, cy),
        }
    }

    /// [`Self::cell_point`] of an occupied cell, `None` otherwise.
    #[inline]
    pub fn occupied_point(&self, i: i64, j: i64) -> Option<(f64, f64)> {
        let k = self.index(i, j)?;
        (self.cells[k] > self.occ_threshold).then(|| self.point_at(k, i, j))
    }

    #[inline]
    fn point_at(&self, k: usize, i: i64, j: i64) -> (f64, f64) {
        let r = self.params.resolution;
        let (cx, cy) = (
            self.origin_x + (i as f64 + 0.5) * r,
            self.origin_y + (j as f64 + 0.5) * r,
        );
        let h = self.hits[k];
        if h.n > 0 {
            let n = h.n as f64;
            (cx + h.sx as f64 / n, cy + h.sy as f64 / n)
        } else {
            (cx, cy)
        }
    }

    /// Calls `f` with the [`Self::cell_point`] of every occupied cell in the
    /// inclusive rectangle `[i0, i1] × [j0, j1]`, clipped to the grid.
    #[inline]
    pub fn visit_occupied_rect(
        &self,
        (i0, i1): (i64, i64),
        (j0, j1): (i64, i64),
        mut f: impl FnMut(f64, f64),
    ) {
        let (w, h) = (self.width as i64, self.height as i64);
        let (a, b) = (i0.max(0), i1.min(w - 1));
        for j in j0.max(0)..=j1.min(h - 1) {
            let base = (j * w) as usize;
            for i in a..=b {
                let k = base + i as usize;
                if self.cells[k] > self.occ_threshold {
                    let (x, y) = self.point_at(k, i, j);
                    f(x, y);
                }
            }
        }
    }

    fn record_hit(&mut self, x: f64, y: f64) {
        let (i, j) = self.cell_of(x, y);
        if let Some(k) = self.index(i, j) {
            let (cx, cy) = self.cell_center(i, j);
            let h = &mut self.hits[k];
            h.sx += (x - cx) as f32;
            h.sy += (y - cy) as f32;
            h.n += 1;
        }
    }

    #[inline]
    fn index(&self, i: i64, j: i64) -> Option<usize> {
        (i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height)
            .then(|| j as usize * self.width + i as usize)
    }

    /// Log-odds of a cell; cells outside the grid are unknown (0).
    #[inline]
    pub fn log_odds(&self, i: i64, j: i64) -> f64 {
        self.index(i, j).map_or(0.0, |k| self.cells[k] as f64)
    }

    pub fn probability(&self, i: i64, j: i64) -> f64 {
        log_odds_to_prob(self.log_odds(i, j))
    }

    /// Log-odds of an occupied cell, `None` otherwise.
    #[inline]
    pub fn occupied_log_odds(&self, i: i64, j: i64) -> Option<f64> {
        let k = self.index(i, j)?;
        (self.cells[k] > self.occ_threshold).then(|| self.cells[k] as f64)
    }

    #[inline]
    pub fn is_occupied(&self, i: i64, j: i64) -> bool {
        self.index(i, j)
            .is_some_and(|k| self.cells[k] > self.occ_threshold)
    }

    fn store(&mut self, k: usize, l: f64) {
        let new = l.clamp(self.params.l_min, self.params.l_max) as f32;
        let was = self.cells[k] > self.occ_threshold;
        let now = new > self.occ_threshold;
        if was != now {
            if now {
                self.n_occupied += 1;
            } else {
                self.n_occupied -= 1;
            }
        }
        self.cells[k] = new;
    }

    pub fn set_log_odds(&mut self, i: i64, j: i64, l: f64) {
        if let Some(k) = self.index(i, j) {
            self.store(k, l);
        }
    }

    fn add(&mut self, i: i64, j: i64, delta: f64) {
        if let Some(k) = self.index(i, j) {
            self.store(k, self.cells[k] as f64 + delta);
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.n_occupied
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        let (i, j) = self.cell_of(x, y);
        self.index(i, j).is_some()
    }

    /// Grows the grid (shifting the origin when needed) so the world box
    /// `[min_x, max_x] × [min_y, max_y]` is covered.
    pub fn ensure_covers(&mut self, min_x: f64, min_y: f64, max_x: f64, max_y: f64) {
        let r = self.params.resolution;
        let (i0, j0) = self.cell_of(min_x, min_y);
        let (i1, j1) = self.cell_of(max_x, max_y);
        if i0 >= 0 && j0 >= 0 && (i1 as usize) < self.width && (j1 as usize) < self.height {
            return;
        }
        let m = (GROW_MARGIN_M / r).ceil() as i64;
        let lo_i = if i0 < 0 { i0 - m } else { 0 };
        let lo_j = if j0 < 0 { j0 - m } else { 0 };
        let hi_i = if i1 >= self.width as i64 {
            i1 + m
        } else {
            self.width as i64 - 1
        };
        let hi_j = if j1 >= self.height as i64 {
            j1 + m
        } else {
            self.height as i64 - 1
        };
        let new_w = (hi_i - lo_i + 1) as usize;
        let new_h = (hi_j - lo_j + 1) as usize;
        let mut cells = vec![0.0f32; new_w * new_h];
        let mut hits = vec![HitAcc::default(); new_w * new_h];
        for j in 0..self.height {
            let dst = (j as i64 - lo_j) as usize * new_w + (-lo_i) as usize;
            let src = j * self.width..(j + 1) * self.width;
            cells[dst..dst + self.width].copy_from_slice(&self.cells[src.clone()]);
            hits[dst..dst + self.width].copy_from_slice(&self.hits[src]);
        }
        self.hits = hits;
        self.origin_x += lo_i as f64 * r;
        self.origin_y += lo_j as f64 * r;
        self.width = new_w;
        self.height = new_h;
        self.cells = cells;
    }

    /// Renders the grid as an 8-bit image: 0 occupied, 254 free, 205 unknown.
    /// The top image row is the highest `y`.
    pub fn to_image(&self) -> GrayImage {
        let free_l = -self.occ_threshold;
        let mut pixels = Vec::with_capacity(self.width * self.height);
        for j in (0..self.height).rev() {
            for i in 0..self.width {
                let l = self.cells[j * self.width + i];
                pixels.push(if l > self.occ_threshold {
                    0
                } else if l < free_l {
                    254
                } else {
                    205
                });
            }
        }
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// Sidecar text: `resolution`, `origin_x`, `origin_y`, one per line.
    pub fn meta_text(&self) -> String {
        format!(
            "resolution {}\norigin_x {}\norigin_y {}\n",
            self.params.resolution, self.origin_x, self.origin_y
        )
    }

    /// Writes `<stem>.pgm` plus a `<stem>.txt` sidecar with resolution and origin.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        pgm::write(&self.to_image(), &dir.join(format!("{stem}.pgm")))?;
        let p = dir.join(format!("{stem}.txt"));
        fs::write(&p, self.meta_text()).map_err(|e| Error::io(&p, e))
    }
}

/// `floor` without a libm call.
#[inline]
fn floor_i64(v: f64) -> i64 {
    let t = v as i64;
    if (t as f64) > v {
        t - 1
    } else {
        t
    }
}

/// Integer cells on the segment between two cells, both ends included.
fn bresenham(mut x0: i64, mut y0: i64, x1: i64, y1: i64, mut visit: impl FnMut(i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        visit(x0, y0);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Integrates a scan taken from `pose` with the standard log-odds ray update.
///
/// Every cell a beam passes through gets the free-space decrement; the end
/// cell of a returning beam gets the occupied increment instead. Beams
/// without a return only clear space. The grid grows to fit the scan.
pub fn map_update(grid: &mut OccupancyGrid, pose: &Pose, scan: &LidarScan) {
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (pose.x, pose.y, pose.x, pose.y);
    let ends: Vec<(f64, f64, bool)> = (0..scan.len())
        .map(|k| {
            let (s, c) = (pose.theta + scan.angles[k]).sin_cos();
            let ex = pose.x + scan.ranges[k] * c;
            let ey = pose.y + scan.ranges[k] * s;
            lo_x = lo_x.min(ex);
            lo_y = lo_y.min(ey);
            hi_x = hi_x.max(ex);
            hi_y = hi_y.max(ey);
            (ex, ey, scan.hit[k])
        })
        .collect();
    grid.ensure_covers(lo_x, lo_y, hi_x, hi_y);
    let (ri, rj) = grid.cell_of(pose.x, pose.y);
    let (l_free, l_occ) = (grid.params.l_free, grid.params.l_occ);
    for (ex, ey, hit) in ends {
        let (ei, ej) = grid.cell_of(ex, ey);
        bresenham(ri, rj, ei, ej, |i, j| {
            if i != ei || j != ej {
                grid.add(i, j, l_free);
            }
        });
        if hit {
            grid.add(ei, ej, l_occ);
            grid.record_hit(ex, ey);
        }
    }
}
