use std::hint::black_box;

use adslam_core::detect::{
    generate_synthetic_dataset, AugmentConfig, CovarianceDetector, Detector, MappingConfig,
    ModelConfig, ModelParams,
};
use adslam_core::pipeline::{run_slam, simulate_sensors, SlamConfig, SENSOR_ODOMETRY_NOISE};
use adslam_core::sim::{build_scenario, cast_scan, LidarSpec, ScenarioKind};
use adslam_core::slam::{
    map_update, raw_score, scanmatch, BeamModelConfig, GridParams, OccupancyGrid, ScanMatchConfig,
};
use adslam_core::Pose;
use criterion::{criterion_group, criterion_main, Criterion};

fn indoor_map() -> (OccupancyGrid, adslam_core::sim::LidarScan, Pose) {
    let (world, _) = build_scenario(ScenarioKind::Indoor, 10.0).unwrap();
    let b = world.bounds();
    let mut g =
        OccupancyGrid::new(GridParams::default(), b.min_x, b.min_y, b.max_x, b.max_y).unwrap();
    let pose = Pose::new(3.1, 4.2, 0.3);
    let scan = cast_scan(&world, &pose, &LidarSpec::default(), 0).unwrap();
    for _ in 0..3 {
        map_update(&mut g, &pose, &scan);
    }
    (g, scan, pose)
}

fn scoring(c: &mut Criterion) {
    let (map, scan, pose) = indoor_map();
    let beam = BeamModelConfig::default();
    let off = Pose::new(pose.x + 0.07, pose.y - 0.05, pose.theta + 0.02);
    c.bench_function("raw_score", |b| {
        b.iter(|| raw_score(&map, black_box(&off), &scan, &beam))
    });
    let sm = ScanMatchConfig::default();
    c.bench_function("scanmatch", |b| {
        b.iter(|| scanmatch(&map, black_box(&off), &scan, &sm, &beam))
    });
}

fn detection(c: &mut Criterion) {
    let samples =
        generate_synthetic_dataset(2, 0, &MappingConfig::default(), &AugmentConfig::default())
            .unwrap();
    let params = ModelParams::init(ModelConfig::default(), 0).unwrap();
    let pixels = &samples[0].image.pixels;
    c.bench_function("model_predict", |b| {
        b.iter(|| params.predict(black_box(pixels)).unwrap())
    });

    let (world, gt) = build_scenario(ScenarioKind::StraightCorridor, 10.0).unwrap();
    let log = simulate_sensors(
        &world,
        &gt,
        &LidarSpec::default(),
        &SENSOR_ODOMETRY_NOISE,
        0,
    )
    .unwrap();
    let cfg = SlamConfig::default();
    let mut set = None;
    let mut det = CovarianceDetector::default();
    run_slam(&gt, &log, &cfg, &mut det, 0, |_, _, s| {
        set = Some(s.clone());
        Ok(())
    })
    .unwrap();
    let set = set.unwrap();
    c.bench_function("covariance_detector", |b| {
        b.iter(|| det.level(black_box(&set)).unwrap())
    });
}

fn slam(c: &mut Criterion) {
    let (world, gt) = build_scenario(ScenarioKind::Indoor, 4.0).unwrap();
    let log = simulate_sensors(
        &world,
        &gt,
        &LidarSpec::default(),
        &SENSOR_ODOMETRY_NOISE,
        0,
    )
    .unwrap();
    let cfg = SlamConfig {
        n_particles: 10,
        ..SlamConfig::default()
    };
    let mut g = c.benchmark_group("slam");
    g.sample_size(10);
    g.bench_function("indoor_scale4_n10", |b| {
        b.iter(|| {
            let mut det = CovarianceDetector::default();
            run_slam(&gt, &log, &cfg, &mut det, 0, |_, _, _| Ok(())).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, scoring, detection, slam);
criterion_main!(benches);
