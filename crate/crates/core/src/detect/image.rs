//! Particle swarms to scale-normalized binary images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgm::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingConfig {
    /// Minimum world extent covered by the image per axis, m.
    pub canvas_m: f64,
    /// Image side, px.
    pub size_px: usize,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            canvas_m: 10.0,
            size_px: 64,
        }
    }
}

impl MappingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.canvas_m > 0.0) {
            return Err(Error::Domain("canvas_m must be > 0".into()));
        }
        if self.size_px < 8 {
            return Err(Error::Domain("size_px must be >= 8".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub sigma_px: f64,
    pub occupy_threshold: f64,
    /// Side of the square splat, cells (odd).
    pub support: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            sigma_px: 1.0,
            occupy_threshold: 0.05,
            support: 5,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_px > 0.0) || !(self.occupy_threshold > 0.0) {
            return Err(Error::Domain(
                "sigma_px and occupy_threshold must be > 0".into(),
            ));
        }
        if self.support.is_multiple_of(2) {
            return Err(Error::Domain("augment support must be odd".into()));
        }
        Ok(())
    }
}

/// Square grayscale image with values in [0, 1], row `j` then column `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleImage {
    pub size_px: usize,
    pub pixels: Vec<f64>,
}

impl ParticleImage {
    pub fn zeros(size_px: usize) -> Self {
        Self {
            size_px,
            pixels: vec![0.0; size_px * size_px],
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.pixels[j * self.size_px + i]
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.size_px,
            height: self.size_px,
            pixels: self
                .pixels
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect(),
        }
    }

    pub fn from_gray(img: &GrayImage) -> Result<Self> {
        if img.width != img.height {
            return Err(Error::Domain("particle images must be square".into()));
        }
        Ok(Self {
            size_px: img.width,
            pixels: img.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
        })
    }
}

/// Per axis: widen the range symmetrically to at least `canvas_m`, then
/// `floor((r - r_min) · S / (r_max - r_min))`, clamped to `[0, S-1]`.
pub fn linear_map(coords: &[(f64, f64)], cfg: &MappingConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate()?;
    if coords.is_empty() {
        return Err(Error::Domain("cannot map an empty swarm".into()));
    }
    if coords.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Domain("swarm coordinates must be finite".into()));
    }
    let axis = |get: fn(&(f64, f64)) -> f64| {
        let lo = coords.iter().map(get).fold(f64::INFINITY, f64::min);
        let hi = coords.iter().map(get).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        if span < cfg.canvas_m {
            let pad = (cfg.canvas_m - span) / 2.0;
            (lo - pad, hi + pad)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = axis(|p| p.0);
    let (y0, y1) = axis(|p| p.1);
    let s = cfg.size_px;
    let disc = |r: f64, lo: f64, hi: f64| {
        (((r - lo) * s as f64 / (hi - lo)).floor().max(0.0) as usize).min(s - 1)
    };
    Ok(coords
        .iter()
        .map(|&(x, y)| (disc(x, x0, x1), disc(y, y0, y1)))
        .collect())
}

/// `exp(-(dx² + dy²) / (2σ²)) / (2πσ²)`.
pub fn gaussian_weight(dx: f64, dy: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (-(dx * dx + dy * dy) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2)
}

/// Summed Gaussian influence of every particle over its support window.
pub fn accumulate(indices: &[(usize, usize)], size_px: usize, cfg: &AugmentConfig) -> Vec<f64> {
    let mut acc = vec![0.0; size_px * size_px];
    let r = (cfg.support / 2) as i64;
    for &(i, j) in indices {
        for dj in -r..=r {
            for di in -r..=r {
                let (x, y) = (i as i64 + di, j as i64 + dj);
                if x < 0 || y < 0 || x >= size_px as i64 || y >= size_px as i64 {
                    continue;
                }
                acc[y as usize * size_px + x as usize] +=
                    gaussian_weight(di as f64, dj as f64, cfg.sigma_px);
            }
        }
    }
    acc
}

/// Thresholded splat image: 1 where the accumulated influence reaches
/// `occupy_threshold`, else 0.
pub fn gaussian_augment(
    indices: &[(usize, usize)],
    size_px: usize,
    cfg: &AugmentConfig,
) -> Result<ParticleImage> {
    cfg.validate()?;
    if let Some(&(i, j)) = indices.iter().find(|&&(i, j)| i >= size_px || j >= size_px) {
        return Err(Error::Domain(format!(
            "pixel index ({i}, {j}) outside a {size_px}px image"
        )));
    }
    let acc = accumulate(indices, size_px, cfg);
    Ok(ParticleImage {
        size_px,
        pixels: acc
            .iter()
            .map(|&o| if o >= cfg.occupy_threshold { 1.0 } else { 0.0 })
            .collect(),
    })
}

/// Linear mapping followed by Gaussian augmentation.
pub fn swarm_image(
    coords: &[(f64, f64)],
    mapping: &MappingConfig,
    augment: &AugmentConfig,
) -> Result<ParticleImage> {
    let idx = linear_map(coords, mapping)?;
    gaussian_augment(&idx, mapping.size_px, augment)
}
