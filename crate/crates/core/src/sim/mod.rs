//! Deterministic 2D worlds, lidar ray casting, scripted trajectories and
//! noisy odometry for the indoor / corridor / loop / open-landmark scenarios.

mod lidar;
mod odometry;
mod scenario;
mod trajectory;
mod world;

pub use lidar::{cast_scan, LidarScan, LidarSpec};
pub use odometry::{
    apply_odometry, perturb_odometry, synthesize_odometry, OdometryNoise, OdometryReading,
};
pub use scenario::{build_scenario, ScenarioKind, CONTROL_DT};
pub use trajectory::{format_tum, format_tum_line, read_tum, write_tum, TimedPose, Trajectory};
pub use world::{read_world, write_world, Bounds, Segment, WorldMap};
