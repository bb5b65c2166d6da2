//! Particle-filter SLAM core.

pub mod beam;
pub mod grid;
pub mod motion;
pub mod particles;
pub mod resample;
pub mod scanmatch;

pub use beam::{
    beam_scores, log_likelihood, raw_score, weight_update, BeamModelConfig, BeamScore, PoseScorer,
    ScanPoints,
};
pub use grid::{map_update, GridParams, OccupancyGrid};
pub use motion::{motion_update, motion_update_with};
pub use particles::{read_dump, write_dump, Particle, ParticleSet, SwarmDump};
pub use resample::{fuse_nearest, resample_enhanced, resample_standard, systematic_indices};
pub use scanmatch::{plateau_drop, scanmatch, ScanMatchConfig, ScanMatchResult};
