use adslam_core::sim::{build_scenario, cast_scan, LidarSpec, ScenarioKind, WorldMap};
use adslam_core::slam::{
    map_update, scanmatch, BeamModelConfig, GridParams, OccupancyGrid, PoseScorer, ScanMatchConfig,
    ScanPoints,
};
use adslam_core::Pose;

fn noiseless() -> LidarSpec {
    LidarSpec {
        range_noise_sigma: 0.0,
        ..LidarSpec::default()
    }
}

fn mapped(world: &WorldMap, poses: &[Pose]) -> OccupancyGrid {
    let b = world.bounds();
    let mut g =
        OccupancyGrid::new(GridParams::default(), b.min_x, b.min_y, b.max_x, b.max_y).unwrap();
    for p in poses {
        let scan = cast_scan(world, p, &noiseless(), 0).unwrap();
        for _ in 0..3 {
            map_update(&mut g, p, &scan);
        }
    }
    g
}

#[test]
fn self_match_keeps_pose() {
    let (world, _) = build_scenario(ScenarioKind::Indoor, 10.0).unwrap();
    let p = Pose::new(3.1, 4.2, 0.3);
    let g = mapped(&world, &[p]);
    let scan = cast_scan(&world, &p, &noiseless(), 0).unwrap();
    let r = scanmatch(
        &g,
        &p,
        &scan,
        &ScanMatchConfig::default(),
        &BeamModelConfig::default(),
    );
    assert!(r.success);
    // bias from map discretization, bounded by half a cell
    assert!(r.pose.distance(&p) < GridParams::default().resolution / 2.0);
}

#[test]
fn recovers_offset_in_room() {
    let (world, _) = build_scenario(ScenarioKind::Indoor, 10.0).unwrap();
    let cfg = ScanMatchConfig::default();
    let p = Pose::new(2.0, 2.0, 0.0);
    let g = mapped(&world, &[p]);
    let scan = cast_scan(&world, &p, &noiseless(), 0).unwrap();
    let r = scanmatch(
        &g,
        &p.offset(0.2, 0.0, 0.0),
        &scan,
        &cfg,
        &BeamModelConfig::default(),
    );
    assert!(r.success);
    assert!(
        r.pose.distance(&p) <= cfg.finest_linear_step() / 2.0,
        "{:?}",
        r.pose
    );
}

/// Away from the canonical case the optimum is biased by the map's cell
/// discretization; recovery is still well inside one cell.
#[test]
fn recovers_offsets_across_room() {
    let (world, _) = build_scenario(ScenarioKind::Indoor, 10.0).unwrap();
    let cfg = ScanMatchConfig::default();
    for k in 0..40 {
        let p = Pose::new(
            2.0 + (k % 7) as f64 * 0.9,
            2.0 + (k % 5) as f64 * 1.3,
            k as f64 * 0.37,
        );
        let g = mapped(&world, &[p]);
        let scan = cast_scan(&world, &p, &noiseless(), 0).unwrap();
        let (s, c) = p.theta.sin_cos();
        let (f, l) = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][k % 4];
        let init = p.offset(0.2 * (f * c - l * s), 0.2 * (f * s + l * c), 0.0);
        let r = scanmatch(&g, &init, &scan, &cfg, &BeamModelConfig::default());
        assert!(r.success, "case {k}");
        let err = r.pose.distance(&p);
        assert!(err < 0.025, "case {k}: error {err}");
    }
}

#[test]
fn corridor_offset_is_a_plateau() {
    let (world, _) = build_scenario(ScenarioKind::StraightCorridor, 30.0).unwrap();
    let p = Pose::new(15.0, 0.5, 0.0);
    let g = mapped(
        &world,
        &[p, Pose::new(13.0, 0.5, 0.0), Pose::new(17.0, 0.5, 0.0)],
    );
    let scan = cast_scan(&world, &p, &noiseless(), 0).unwrap();
    let init = p.offset(0.3, 0.0, 0.0);
    let r = scanmatch(
        &g,
        &init,
        &scan,
        &ScanMatchConfig::default(),
        &BeamModelConfig::default(),
    );
    assert!(!r.success);
    assert_eq!(r.pose, init);

    // without the curvature test the plateau still scores high
    let loose = ScanMatchConfig {
        plateau_check: false,
        ..ScanMatchConfig::default()
    };
    assert!(scanmatch(&g, &init, &scan, &loose, &BeamModelConfig::default()).success);
}

#[test]
fn empty_map_fails_with_zero_score() {
    let (world, _) = build_scenario(ScenarioKind::Indoor, 10.0).unwrap();
    let p = Pose::new(3.0, 3.0, 0.0);
    let g = OccupancyGrid::new(GridParams::default(), 0.0, 0.0, 10.0, 10.0).unwrap();
    let scan = cast_scan(&world, &p, &noiseless(), 0).unwrap();
    let r = scanmatch(
        &g,
        &p,
        &scan,
        &ScanMatchConfig::default(),
        &BeamModelConfig::default(),
    );
    assert!(!r.success);
    assert_eq!(r.score, 0.0);
    assert_eq!(r.pose, p);
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
    #[test]
    fn memoized_scorer_equals_direct_score(
        map_poses in proptest::collection::vec((1.0f64..9.0, 1.0f64..9.0, -3.1f64..3.1), 1..4),
        queries in proptest::collection::vec((-0.3f64..0.3, -0.3f64..0.3, -0.2f64..0.2), 1..40),
        radius in 0usize..6,
    ) {
        let (world, _) = build_scenario(ScenarioKind::Indoor, 10.0).unwrap();
        let poses: Vec<Pose> = map_poses.iter().map(|&(x, y, t)| Pose::new(x, y, t)).collect();
        let b = world.bounds();
        let mut g =
            OccupancyGrid::new(GridParams::default(), b.min_x, b.min_y, b.max_x, b.max_y).unwrap();
        for (k, p) in poses.iter().enumerate() {
            let noisy = LidarSpec::default();
            map_update(&mut g, p, &cast_scan(&world, p, &noisy, k as u64).unwrap());
        }
        let scan = cast_scan(&world, &poses[0], &LidarSpec::default(), 99).unwrap();
        let pts = ScanPoints::new(&scan);
        let cfg = BeamModelConfig { hit_search_radius: radius, ..BeamModelConfig::default() };
        let mut scorer = PoseScorer::new(&g, &pts, &cfg);
        for &(dx, dy, dt) in queries.iter().chain(&queries) {
            let q = poses[0].offset(dx, dy, dt);
            proptest::prop_assert_eq!(scorer.raw_score(&q), pts.raw_score(&g, &q, &cfg));
        }
    }
}
