//! Synthetic labeled swarms and their on-disk layout.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::image::{swarm_image, AugmentConfig, MappingConfig, ParticleImage};
use super::label::{label_sample, Label};
use crate::error::{Error, Result};
use crate::pgm;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    pub image: ParticleImage,
    pub label: Label,
    pub r_value: f64,
}

/// A generated swarm before rasterization.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSwarm {
    pub positions: Vec<(f64, f64)>,
    /// Raw (unnormalized) importance weights.
    pub weights: Vec<f64>,
    /// Family the swarm was drawn from.
    pub intent: Label,
}

fn gauss(r: &mut Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Draws one swarm. Non-degenerate: a tight isotropic Gaussian with
/// near-uniform weights. Degenerate: an elongated cloud or a scatter of
/// small clusters, with log-normal (heavy-tailed) weights.
pub fn synthetic_swarm(intent: Label, r: &mut Rng) -> SyntheticSwarm {
    let n = r.random_range(30..=100);
    let (cx, cy) = (r.random_range(-20.0..20.0), r.random_range(-20.0..20.0));
    let mut positions = Vec::with_capacity(n);
    let weights: Vec<f64> = match intent {
        Label::NonDegenerate => {
            let s = r.random_range(0.05..0.4);
            for _ in 0..n {
                positions.push((cx + s * gauss(r), cy + s * gauss(r)));
            }
            (0..n).map(|_| r.random_range(0.7..1.3)).collect()
        }
        Label::Degenerate => {
            if r.random_bool(0.5) {
                let major = r.random_range(1.2..4.0);
                let minor = r.random_range(0.05..0.2);
                let (s, c) = r.random_range(0.0..std::f64::consts::PI).sin_cos();
                for _ in 0..n {
                    let (u, v) = (major * gauss(r), minor * gauss(r));
                    positions.push((cx + c * u - s * v, cy + s * u + c * v));
                }
            } else {
                let k = r.random_range(2..=4);
                let spread = r.random_range(2.0..5.0);
                let centers: Vec<(f64, f64)> = (0..k)
                    .map(|_| {
                        let a = r.random_range(0.0..std::f64::consts::TAU);
                        let d = spread * r.random_range(0.5..1.0);
                        (cx + d * a.cos(), cy + d * a.sin())
                    })
                    .collect();
                let s = r.random_range(0.05..0.3);
                for i in 0..n {
                    let (mx, my) = centers[i % k];
                    positions.push((mx + s * gauss(r), my + s * gauss(r)));
                }
            }
            let sl = r.random_range(1.5..2.2);
            (0..n)
                .map(|_| (sl * gauss(r) - 0.5 * sl * sl).exp())
                .collect()
        }
    };
    SyntheticSwarm {
        positions,
        weights,
        intent,
    }
}

/// `n` samples alternating between the two families in a shuffled order.
pub fn generate_synthetic_swarms(n: usize, seed: u64) -> Result<Vec<SyntheticSwarm>> {
    if n < 2 {
        return Err(Error::Usage("a dataset needs at least 2 samples".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(rng::derive(seed, &[0])));
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(k, i)| {
            let intent = if i % 2 == 0 {
                Label::NonDegenerate
            } else {
                Label::Degenerate
            };
            synthetic_swarm(intent, &mut rng::seeded(rng::derive(seed, &[1, k as u64])))
        })
        .collect())
}

pub fn generate_synthetic_dataset(
    n: usize,
    seed: u64,
    mapping: &MappingConfig,
    augment: &AugmentConfig,
) -> Result<Vec<DatasetSample>> {
    generate_synthetic_swarms(n, seed)?
        .iter()
        .map(|s| sample_from_swarm(&s.positions, &s.weights, mapping, augment))
        .collect()
}

/// Rasterizes a swarm and labels it from its raw weights.
pub fn sample_from_swarm(
    positions: &[(f64, f64)],
    weights: &[f64],
    mapping: &MappingConfig,
    augment: &AugmentConfig,
) -> Result<DatasetSample> {
    let (r_value, label) = label_sample(weights)?;
    Ok(DatasetSample {
        image: swarm_image(positions, mapping, augment)?,
        label,
        r_value,
    })
}

/// Index sets of a 6:2:2 train/validation/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle, then 60% / 20% / 20% (rounded; test takes the rest).
pub fn split_indices(n: usize, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(rng::derive(seed, &[0x5911])));
    let n_train = (n as f64 * 0.6).round() as usize;
    let n_val = ((n as f64 * 0.2).round() as usize).min(n - n_train);
    let mut test = idx.split_off(n_train + n_val);
    let mut val = idx.split_off(n_train);
    idx.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Split {
        train: idx,
        val,
        test,
    }
}

pub const LABELS_FILE: &str = "labels.csv";
pub const SPLIT_FILE: &str = "split.csv";

/// On-disk dataset: PGM images, `labels.csv` (`file,label,r_value`) and
/// `split.csv` (`file,split`).
pub fn write_dataset(dir: &Path, samples: &[DatasetSample], split: &Split) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Usage("refusing to write an empty dataset".into()));
    }
    let img_dir = dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let width = samples.len().to_string().len().max(5);
    let name = |i: usize| format!("images/{i:0width$}.pgm");
    let mut labels = String::from("file,label,r_value\n");
    for (i, s) in samples.iter().enumerate() {
        pgm::write(&s.image.to_gray(), &dir.join(name(i)))?;
        let _ = writeln!(labels, "{},{},{}", name(i), s.label.as_str(), s.r_value);
    }
    let lp = dir.join(LABELS_FILE);
    fs::write(&lp, labels).map_err(|e| Error::io(&lp, e))?;
    let mut which = vec![""; samples.len()];
    for (set, tag) in [
        (&split.train, "train"),
        (&split.val, "val"),
        (&split.test, "test"),
    ] {
        for &i in set {
            which[i] = tag;
        }
    }
    let mut sp = String::from("file,split\n");
    for (i, tag) in which.iter().enumerate() {
        let _ = writeln!(sp, "{},{}", name(i), tag);
    }
    let spp = dir.join(SPLIT_FILE);
    fs::write(&spp, sp).map_err(|e| Error::io(&spp, e))
}

fn read_csv(path: &Path, expected: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, 1, format!("{other:?}")),
    })?;
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header {}", expected.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        rows.push(rec.map_err(|e| Error::parse(path, k + 2, e.to_string()))?);
    }
    Ok(rows)
}

/// Loads a dataset written by [`write_dataset`]. Split membership follows
/// `split.csv` when present, else a fresh split from `seed`.
pub fn read_dataset(dir: &Path, seed: u64) -> Result<(Vec<DatasetSample>, Split)> {
    let lp = dir.join(LABELS_FILE);
    let rows = read_csv(&lp, &["file", "label", "r_value"])?;
    if rows.is_empty() {
        return Err(Error::Usage(format!("{} lists no samples", lp.display())));
    }
    let mut files: HashMap<PathBuf, usize> = HashMap::with_capacity(rows.len());
    let mut samples = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        let file = &row[0];
        let label: Label = row[1]
            .parse()
            .map_err(|_| Error::parse(&lp, k + 2, format!("bad label '{}'", &row[1])))?;
        let r_value: f64 = row[2]
            .parse()
            .map_err(|_| Error::parse(&lp, k + 2, format!("bad r_value '{}'", &row[2])))?;
        let image = ParticleImage::from_gray(&pgm::read(&dir.join(file))?)?;
        files.insert(file.into(), k);
        samples.push(DatasetSample {
            image,
            label,
            r_value,
        });
    }
    let spp = dir.join(SPLIT_FILE);
    let split = if spp.exists() {
        let mut split = Split {
            train: vec![],
            val: vec![],
            test: vec![],
        };
        for (k, row) in read_csv(&spp, &["file", "split"])?.iter().enumerate() {
            let Some(&i) = files.get(Path::new(&row[0])) else {
                return Err(Error::parse(
                    &spp,
                    k + 2,
                    format!("unknown file '{}'", &row[0]),
                ));
            };
            match &row[1] {
                "train" => split.train.push(i),
                "val" => split.val.push(i),
                "test" => split.test.push(i),
                other => {
                    return Err(Error::parse(
                        &spp,
                        k + 2,
                        format!("unknown split '{other}'"),
                    ))
                }
            }
        }
        split
    } else {
        split_indices(samples.len(), seed)
    };
    Ok((samples, split))
}
