//! Particle-filter lidar SLAM with degeneracy detection from particle-swarm
//! images and an adaptive anti-degeneracy pose optimization layer.
//!
//! Module map:
//! - [`sim`]: worlds, ray casting, scenarios, odometry synthesis.
//! - [`slam`]: occupancy grids, beam model, resampling, scan matching.
//! - [`detect`]: swarm images, labeling, covariance baseline, the residual +
//!   attention classifier and its training loop.
//! - [`antidegen`]: trust factor, coarse/fine search, pose selection.
//! - [`pipeline`]: the end-to-end filter loop tying the above together.
//! - [`eval`]: trajectory error metrics and run exports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod antidegen;
pub mod detect;
pub mod error;
pub mod eval;
pub mod pgm;
pub mod pipeline;
pub mod pose;
pub mod rng;
pub mod sim;
pub mod slam;

pub use error::{Error, Result};
pub use pose::{normalize_angle, Pose};
