//! Flat `key=value` run configuration.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use adslam_core::detect::{AugmentConfig, DetectorKind, MappingConfig, TrainConfig};
use adslam_core::pipeline::{SlamConfig, SENSOR_ODOMETRY_NOISE};
use adslam_core::sim::{LidarSpec, OdometryNoise, ScenarioKind};
use adslam_core::{Error, Result};

/// Where dataset samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Synthetic,
    /// Directory of particle dumps (`x y theta log_weight` per line).
    Dumps(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Option<ScenarioKind>,
    pub scale: f64,
    pub seed: u64,
    pub lidar: LidarSpec,
    pub odom_noise: OdometryNoise,
    pub slam: SlamConfig,
    pub mapping: MappingConfig,
    pub augment: AugmentConfig,
    pub detector: DetectorKind,
    pub model: PathBuf,
    pub dataset: PathBuf,
    pub source: Source,
    pub n: usize,
    pub train: TrainConfig,
    pub dump_every: usize,
    pub swarm: Option<PathBuf>,
    pub est: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub align: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            scale: 10.0,
            seed: 0,
            lidar: LidarSpec::default(),
            odom_noise: SENSOR_ODOMETRY_NOISE,
            slam: SlamConfig::default(),
            mapping: MappingConfig::default(),
            augment: AugmentConfig::default(),
            detector: DetectorKind::Baseline,
            model: "model".into(),
            dataset: "dataset".into(),
            source: Source::Synthetic,
            n: 2000,
            train: TrainConfig::default(),
            dump_every: 0,
            swarm: None,
            est: None,
            gt: None,
            align: false,
        }
    }
}

trait Value: Sized {
    fn parse_value(s: &str) -> Option<Self>;
    fn show(&self) -> Option<String>;
}

macro_rules! display_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn show(&self) -> Option<String> {
                Some(self.to_string())
            }
        }
    )*};
}

display_value!(f64, usize, u64, ScenarioKind, DetectorKind);

impl Value for bool {
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "on" | "true" | "1" => Some(true),
            "off" | "false" | "0" => Some(false),
            _ => None,
        }
    }
    fn show(&self) -> Option<String> {
        Some(if *self { "on" } else { "off" }.into())
    }
}

impl Value for PathBuf {
    fn parse_value(s: &str) -> Option<Self> {
        (!s.is_empty()).then(|| s.into())
    }
    fn show(&self) -> Option<String> {
        Some(self.display().to_string())
    }
}

impl<T: Value> Value for Option<T> {
    fn parse_value(s: &str) -> Option<Self> {
        T::parse_value(s).map(Some)
    }
    fn show(&self) -> Option<String> {
        self.as_ref().and_then(T::show)
    }
}

/// `rot_rot,rot_trans,trans_trans,trans_rot`.
impl Value for OdometryNoise {
    fn parse_value(s: &str) -> Option<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|x| x.trim().parse().ok())
            .collect::<Option<_>>()?;
        match v[..] {
            [a, b, c, d] if v.iter().all(|x| *x >= 0.0 && x.is_finite()) => {
                Some(OdometryNoise::new(a, b, c, d))
            }
            _ => None,
        }
    }
    fn show(&self) -> Option<String> {
        Some(format!(
            "{},{},{},{}",
            self.rot_rot, self.rot_trans, self.trans_trans, self.trans_rot
        ))
    }
}

impl Value for Source {
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "synthetic" => Some(Source::Synthetic),
            _ => s
                .strip_prefix("dumps:")
                .filter(|d| !d.is_empty())
                .map(|d| Source::Dumps(d.into())),
        }
    }
    fn show(&self) -> Option<String> {
        Some(match self {
            Source::Synthetic => "synthetic".into(),
            Source::Dumps(d) => format!("dumps:{}", d.display()),
        })
    }
}

macro_rules! keys {
    ($($key:literal => $($field:ident).+),* $(,)?) => {
        /// Every accepted key, in echo order.
        pub const KEYS: &[&str] = &[$($key),*];

        impl RunConfig {
            /// Sets one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$($field).+ = Value::parse_value(value).ok_or_else(|| {
                            Error::Usage(format!("invalid value `{value}` for key `{key}`"))
                        })?;
                    })*
                    _ => return Err(Error::Usage(format!("unknown key `{key}`"))),
                }
                Ok(())
            }

            /// Fully resolved `key=value` lines; unset optional keys are omitted.
            pub fn echo(&self) -> String {
                let mut out = String::new();
                $(if let Some(v) = Value::show(&self.$($field).+) {
                    let _ = writeln!(out, "{}={}", $key, v);
                })*
                out
            }
        }
    };
}

keys! {
    "scenario" => scenario,
    "scale" => scale,
    "seed" => seed,
    "N" => slam.n_particles,
    "lidar.beams" => lidar.beam_count,
    "lidar.fov" => lidar.fov,
    "lidar.max_range" => lidar.max_range,
    "lidar.range_noise" => lidar.range_noise_sigma,
    "odom_noise" => odom_noise,
    "motion_noise" => slam.motion_noise,
    "beam.sigma_hit" => slam.anti.beam.sigma_hit,
    "beam.search_radius" => slam.anti.beam.hit_search_radius,
    "beam.p_miss_floor" => slam.anti.beam.p_miss_floor,
    "grid.resolution" => slam.grid.resolution,
    "scanmatch.score_min" => slam.scanmatch.score_min,
    "scanmatch.plateau_min_drop" => slam.scanmatch.plateau_min_drop,
    "anti_degen" => slam.anti_degen,
    "trigger_ratio" => slam.trigger_ratio,
    "resample_ratio" => slam.resample_ratio,
    "perturb_sigma" => slam.anti.perturb_sigma,
    "search.delta_l" => slam.anti.search.delta_l,
    "search.delta_a" => slam.anti.search.delta_a,
    "search.base_rounds" => slam.anti.search.base_rounds,
    "mapping.canvas_m" => mapping.canvas_m,
    "mapping.size_px" => mapping.size_px,
    "augment.sigma_px" => augment.sigma_px,
    "augment.occupy_threshold" => augment.occupy_threshold,
    "detector" => detector,
    "model" => model,
    "dataset" => dataset,
    "source" => source,
    "n" => n,
    "epochs" => train.epochs,
    "batch_size" => train.batch_size,
    "lr" => train.lr,
    "dump_every" => dump_every,
    "swarm" => swarm,
    "est" => est,
    "gt" => gt,
    "align" => align,
}

impl RunConfig {
    /// Applies `key=value` items in order; later items win.
    pub fn apply<'a>(&mut self, items: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for item in items {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("expected key=value, got `{item}`")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Parses config text: one `key=value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        self.apply(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    /// Cross-field checks shared by all commands.
    pub fn validate(&self) -> Result<()> {
        let usage = |e: Error| match e {
            Error::Domain(m) | Error::Contract(m) => Error::Usage(m),
            other => other,
        };
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Usage("invalid value for key `scale`".into()));
        }
        if !(self.lidar.fov <= 2.0 * PI + 1e-12) {
            return Err(Error::Usage("invalid value for key `lidar.fov`".into()));
        }
        self.lidar.validate().map_err(usage)?;
        self.slam.validate().map_err(usage)?;
        self.mapping.validate().map_err(usage)?;
        self.augment.validate().map_err(usage)?;
        Ok(())
    }

    pub fn require_scenario(&self) -> Result<ScenarioKind> {
        self.scenario
            .ok_or_else(|| Error::Usage("missing required key `scenario`".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected() {
        let mut c = RunConfig::default();
        let e = c.apply(["scenarion=indoor"]).unwrap_err();
        assert!(e.to_string().contains("scenarion"), "{e}");
    }

    #[test]
    fn bad_value_names_key() {
        let mut c = RunConfig::default();
        let e = c.apply(["N=thirty"]).unwrap_err();
        assert!(matches!(e, Error::Usage(_)));
        assert!(e.to_string().contains("`N`"), "{e}");
        assert!(c.apply(["detector=stub:1.5"]).is_err());
        assert!(c.apply(["odom_noise=0.1,0.2"]).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.apply([
            "scenario=circular_corridor",
            "scale=20",
            "detector=stub:0.25",
            "anti_degen=off",
            "source=dumps:runs/a",
            "motion_noise=0.2,0,0.3,0.01",
            "lr=0.0003",
        ])
        .unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.echo()).unwrap();
        assert_eq!(c, d);
        assert_eq!(c.echo(), d.echo());
    }

    #[test]
    fn every_key_is_echoed_once() {
        let mut c = RunConfig::default();
        c.apply(["scenario=indoor", "swarm=s", "est=e", "gt=g"])
            .unwrap();
        let echo = c.echo();
        for k in KEYS {
            let n = echo
                .lines()
                .filter(|l| l.split('=').next() == Some(k))
                .count();
            assert_eq!(n, 1, "{k}");
        }
    }
}
