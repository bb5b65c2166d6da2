use std::path::Path;

use super::baseline::{detect_covariance_baseline, KAPPA};
use super::image::{swarm_image, AugmentConfig, MappingConfig};
use super::model::ModelParams;
use crate::error::{Error, Result};
use crate::slam::ParticleSet;

/// Maps a particle swarm to a degeneracy level `c ∈ [0, 1]`.
pub trait Detector {
    fn level(&mut self, swarm: &ParticleSet) -> Result<f64>;
    fn name(&self) -> String;
}

/// Residual + attention classifier on the swarm image.
pub struct NeuralDetector {
    pub params: ModelParams,
    pub mapping: MappingConfig,
    pub augment: AugmentConfig,
}

impl NeuralDetector {
    pub fn load(dir: &Path, mapping: MappingConfig, augment: AugmentConfig) -> Result<Self> {
        let params = ModelParams::load(dir)?;
        if params.config.size_px != mapping.size_px {
            return Err(Error::Usage(format!(
                "model expects {}px images but mapping size_px is {}",
                params.config.size_px, mapping.size_px
            )));
        }
        Ok(Self {
            params,
            mapping,
            augment,
        })
    }
}

impl Detector for NeuralDetector {
    fn level(&mut self, swarm: &ParticleSet) -> Result<f64> {
        let img = swarm_image(&swarm.positions(), &self.mapping, &self.augment)?;
        Ok(self.params.predict(&img.pixels)?.1)
    }

    fn name(&self) -> String {
        "neural".into()
    }
}

/// Eigenvalue-ratio test on the weighted positional covariance.
pub struct CovarianceDetector {
    pub kappa: f64,
}

impl Default for CovarianceDetector {
    fn default() -> Self {
        Self { kappa: KAPPA }
    }
}

impl Detector for CovarianceDetector {
    fn level(&mut self, swarm: &ParticleSet) -> Result<f64> {
        if swarm.len() < 3 {
            return Ok(0.0);
        }
        let lw = swarm.log_weights();
        let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|l| (l - m).exp()).collect();
        detect_covariance_baseline(&swarm.positions(), &w, self.kappa)
    }

    fn name(&self) -> String {
        "baseline".into()
    }
}

/// Constant level.
pub struct StubDetector {
    pub c: f64,
}

impl Detector for StubDetector {
    fn level(&mut self, _swarm: &ParticleSet) -> Result<f64> {
        Ok(self.c)
    }

    fn name(&self) -> String {
        format!("stub:{}", self.c)
    }
}

/// Detector selection as written in configuration: `neural`, `baseline`
/// or `stub:<c>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectorKind {
    Neural,
    Baseline,
    Stub(f64),
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neural" => Ok(Self::Neural),
            "baseline" => Ok(Self::Baseline),
            _ => {
                let c = s
                    .strip_prefix("stub:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Usage(format!(
                            "unknown detector '{s}' (expected neural, baseline or stub:<c>)"
                        ))
                    })?;
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::Usage(format!("stub level {c} outside [0, 1]")));
                }
                Ok(Self::Stub(c))
            }
        }
    }
}

impl DetectorKind {
    /// Instantiates the detector. `model_dir` is only read for `neural`.
    pub fn build(
        self,
        model_dir: &Path,
        mapping: MappingConfig,
        augment: AugmentConfig,
    ) -> Result<Box<dyn Detector>> {
        Ok(match self {
            Self::Neural => {
                if !model_dir.join(super::model::MANIFEST).is_file() {
                    return Err(Error::Usage(format!(
                        "detector=neural needs a trained model in {}",
                        model_dir.display()
                    )));
                }
                Box::new(NeuralDetector::load(model_dir, mapping, augment)?)
            }
            Self::Baseline => Box::new(CovarianceDetector::default()),
            Self::Stub(c) => Box::new(StubDetector { c }),
        })
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Neural => write!(f, "neural"),
            Self::Baseline => write!(f, "baseline"),
            Self::Stub(c) => write!(f, "stub:{c}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_kinds() {
        assert_eq!(
            "neural".parse::<DetectorKind>().unwrap(),
            DetectorKind::Neural
        );
        assert_eq!(
            "stub:0.5".parse::<DetectorKind>().unwrap(),
            DetectorKind::Stub(0.5)
        );
        assert!(matches!(
            "stub:2".parse::<DetectorKind>(),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            "magic".parse::<DetectorKind>(),
            Err(Error::Usage(_))
        ));
        assert_eq!(DetectorKind::Stub(0.25).to_string(), "stub:0.25");
    }

    #[test]
    fn neural_without_model_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let r = DetectorKind::Neural.build(
            dir.path(),
            MappingConfig::default(),
            AugmentConfig::default(),
        );
        assert!(matches!(r, Err(Error::Usage(_))));
        let mut stub = DetectorKind::Stub(0.3)
            .build(
                dir.path(),
                MappingConfig::default(),
                AugmentConfig::default(),
            )
            .unwrap();
        let set =
            crate::slam::ParticleSet::from_dump(&vec![(crate::Pose::default(), 0.0); 3]).unwrap();
        assert_eq!(stub.level(&set).unwrap(), 0.3);
    }
}
