use super::*;
use crate::annotate::DatasetRecord;
use crate::detect::{MockDetector, MockDetectorParams, OracleDetector};
use crate::annotate::analytic_bbox;
use crate::geom::{shapes, Intrinsics, Vec3};
use crate::physim::{simulate_scene, PhysicsParams, SurfaceSpec};
use crate::register::grid_filter;

fn rig(n: usize) -> Vec<Camera> {
    Camera::quarter_sphere(Intrinsics::centered(640, 480, 525.0), Vec3::zeros(), Vec3::z(), 0.8, n).unwrap()
}

fn scene(lib: &ModelLibrary, seed: u64) -> Scene {
    simulate_scene(lib, &SurfaceSpec::default(), &PhysicsParams::default(), (3, 4), seed).unwrap().0
}

fn oracle_views(lib: &ModelLibrary, seed: u64, n: usize) -> ViewSet {
    capture(&scene(lib, seed), lib, &rig(n), &LightConfig::default(), 0.05).unwrap()
}

fn no_carve(threshold: f64) -> AggregateParams {
    AggregateParams {
        threshold,
        carve: false,
        ..AggregateParams::default()
    }
}

#[test]
fn capture_needs_two_distinct_views() {
    let lib = ModelLibrary::builtin();
    let s = scene(&lib, 1);
    let cams = rig(2);
    assert!(capture(&s, &lib, &cams[..1], &LightConfig::default(), 0.05).is_err());
    assert!(capture(&s, &lib, &[cams[0], cams[0]], &LightConfig::default(), 0.05).is_err());
    assert_eq!(capture(&s, &lib, &cams, &LightConfig::default(), 0.05).unwrap().views.len(), 2);
}

#[test]
fn oracle_cloud_size_is_valid_depth_in_boxes() {
    let lib = ModelLibrary::builtin();
    let vs = oracle_views(&lib, 2, 3);
    let agg = aggregate_object_clouds(&vs, &OracleDetector, &no_carve(0.7));
    assert!(agg.unresolved.is_empty());
    assert!(!agg.clouds.is_empty());
    for (id, oc) in &agg.clouds {
        let mut expected = 0;
        for v in &vs.views {
            if let Some(a) = v.ground_truth.iter().find(|a| &a.object_id == id) {
                let b = a.bbox;
                for y in b.y_min..b.y_max {
                    for x in b.x_min..b.x_max {
                        let z = v.image.depth_at(x as u32, y as u32);
                        expected += usize::from(z > 0.0 && z.is_finite());
                    }
                }
            }
        }
        assert_eq!(oc.cloud.len(), expected, "{id}");
        assert_eq!(oc.cloud.frame, Frame::World);
    }
}

#[test]
fn impossible_threshold_leaves_everything_unresolved() {
    let lib = ModelLibrary::builtin();
    let vs = oracle_views(&lib, 3, 2);
    let agg = aggregate_object_clouds(&vs, &OracleDetector, &no_carve(1.01));
    assert!(agg.clouds.is_empty());
    let mut gt: Vec<String> = vs.views.iter().flat_map(|v| v.ground_truth.iter().map(|a| a.object_id.clone())).collect();
    gt.sort();
    gt.dedup();
    assert_eq!(agg.unresolved, gt);
}

#[test]
fn views_agree_in_world_frame() {
    // Masked object points from every view, grid filtered, lie on the posed model
    // surface, so points from different views coincide up to the filter cell.
    let lib = ModelLibrary::builtin();
    let vs = oracle_views(&lib, 4, 3);
    let cell = 0.005;
    for p in &vs.scene.placements {
        let model = lib.get(&p.object_id).unwrap();
        let dense = crate::register::GridIndex::new(
            &model.mesh.sample_surface(20_000, &mut rng::seeded(7)).iter().map(|s| p.pose.transform_point(s)).collect::<Vec<_>>(),
            cell,
        );
        let k = vs.scene.placements.iter().position(|q| q.object_id == p.object_id).unwrap() as u16 + 1;
        for v in &vs.views {
            let mut pts = Vec::new();
            for y in 0..v.image.height {
                for x in 0..v.image.width {
                    if v.image.instance_at(x, y) == k {
                        pts.push(v.camera().backproject(x as f64, y as f64, v.image.depth_at(x, y) as f64));
                    }
                }
            }
            for q in grid_filter(&pts, cell) {
                let (_, d) = dense.nearest_within(&q, f64::INFINITY).unwrap();
                assert!(d < 2.0 * cell, "{} {}: {d}", p.object_id, v.view_id);
            }
        }
    }
}

#[test]
fn carving_drops_points_outside_other_boxes() {
    let lib = ModelLibrary::builtin();
    let vs = oracle_views(&lib, 5, 3);
    let plain = aggregate_object_clouds(&vs, &OracleDetector, &no_carve(0.7));
    let carved = aggregate_object_clouds(&vs, &OracleDetector, &AggregateParams::default());
    for (id, c) in &carved.clouds {
        assert!(c.cloud.len() <= plain.clouds[id].cloud.len());
    }
}

#[test]
fn noiseless_oracle_poses_are_within_success_region() {
    let lib = ModelLibrary::asymmetric();
    let params = RegisterParams::default();
    let targets = model_targets(&lib, &params);
    let cams = rig(5);
    for seed in 0..3 {
        let s = scene(&lib, 100 + seed);
        let vs = capture(&s, &lib, &cams, &LightConfig::default(), 0.05).unwrap();
        let agg = aggregate_object_clouds(&vs, &OracleDetector, &AggregateParams::default());
        let est = estimate_poses(&agg.clouds, &targets, &s.surface, &params, seed).unwrap();
        assert!(est.rejected.is_empty(), "{:?}", est.rejected);
        for e in &est.accepted {
            let (r, t) = pose_errors(e, &s).unwrap();
            assert!(r < 15.0 && t < 0.05, "{} rot {r} trans {t}", e.object_id);
        }
        assert_eq!(est.accepted.len(), agg.clouds.len());
    }
}

#[test]
fn empty_cloud_is_reported_not_fatal() {
    let lib = ModelLibrary::asymmetric();
    let params = RegisterParams::default();
    let targets = model_targets(&lib, &params);
    let id = lib.ids()[0].clone();
    let mut clouds = BTreeMap::new();
    clouds.insert(
        id.clone(),
        ObjectCloud {
            cloud: PointCloud::new(Vec::new(), Frame::World),
            views: vec!["v0".into()],
        },
    );
    clouds.insert(
        "missing".into(),
        ObjectCloud {
            cloud: PointCloud::new(vec![Vec3::zeros(); 50], Frame::World),
            views: vec![],
        },
    );
    let est = estimate_poses(&clouds, &targets, &SurfaceSpec::default(), &params, 0).unwrap();
    assert!(est.accepted.is_empty());
    let ids: Vec<_> = est.rejected.iter().map(|r| r.object_id.as_str()).collect();
    assert_eq!(ids, vec![id.as_str(), "missing"]);
}

fn truth_estimates(s: &Scene) -> Vec<PoseEstimate> {
    s.placements
        .iter()
        .map(|p| PoseEstimate {
            object_id: p.object_id.clone(),
            pose: p.pose,
            lcp: 1.0,
            residual: 0.0,
            views: vec![],
            points: 0,
        })
        .collect()
}

#[test]
fn true_poses_reproduce_ground_truth_labels() {
    let lib = ModelLibrary::builtin();
    let vs = oracle_views(&lib, 6, 3);
    let labels = relabel_views(&truth_estimates(&vs.scene), &vs, &lib, 0.05).unwrap();
    for (v, (l, _)) in vs.views.iter().zip(&labels) {
        assert_eq!(l.len(), v.ground_truth.len());
        for (a, g) in l.iter().zip(&v.ground_truth) {
            assert_eq!(a.object_id, g.object_id);
            assert!(a.bbox.max_edge_delta(&g.bbox) <= 1);
            assert_eq!(a.source, LabelSource::SelfLabeled);
        }
    }
}

#[test]
fn depth_offset_scales_box_like_a_pinhole() {
    // Cube face-on to a level camera: width in pixels is f * s / z.
    let lib = ModelLibrary::from_meshes(vec![shapes::cuboid("cube", [0.1; 3])], 256).unwrap();
    let surface = SurfaceSpec::default();
    let s = Scene::new("cube", surface, vec![("cube".into(), Pose6D::from_translation(Vec3::new(0.0, 0.0, 0.05)))], 0);
    let k = Intrinsics::centered(640, 480, 525.0);
    let cams = vec![
        Camera::look_at(k, Vec3::new(0.0, -0.6, 0.05), Vec3::new(0.0, 0.0, 0.05), Vec3::z()).unwrap(),
        Camera::look_at(k, Vec3::new(-0.6, 0.0, 0.05), Vec3::new(0.0, 0.0, 0.05), Vec3::z()).unwrap(),
    ];
    let vs = capture(&s, &lib, &cams, &LightConfig::default(), 0.0).unwrap();
    let mut est = truth_estimates(&s);
    est[0].pose = Pose6D::from_translation(Vec3::new(0.0, 0.02, 0.05));
    let labels = relabel_views(&est, &vs, &lib, 0.0).unwrap();
    let b = labels[0].0[0].bbox;
    let z = 0.6 + 0.02 - 0.05;
    let expected = 525.0 * 0.1 / z;
    assert!((b.width() as f64 - expected).abs() <= 1.0, "{} vs {expected}", b.width());
    assert!((b.height() as f64 - expected).abs() <= 1.0);
    let analytic = analytic_bbox(&lib.get("cube").unwrap().mesh, &est[0].pose, &cams[0]).unwrap().unwrap();
    assert!(b.max_edge_delta(&analytic) <= 1);
}

#[test]
fn objects_without_estimates_get_no_label() {
    let lib = ModelLibrary::builtin();
    let vs = oracle_views(&lib, 7, 3);
    let mut est = truth_estimates(&vs.scene);
    let dropped = est.remove(0).object_id;
    for (l, _) in relabel_views(&est, &vs, &lib, 0.05).unwrap() {
        assert!(l.iter().all(|a| a.object_id != dropped));
    }
}

fn world(lib: &ModelLibrary, seed: u64) -> World {
    let s = scene(lib, seed);
    World {
        configs: default_configs(&s.surface),
        scene: s,
        cameras: rig(3),
        light: LightConfig::default(),
    }
}

fn dummy_record() -> DatasetRecord {
    let cam = rig(1)[0];
    DatasetRecord {
        scene_id: "seed".into(),
        view_id: "v0".into(),
        images: ViewPaths::new("seed", "v0"),
        camera: cam,
        light: LightConfig::default(),
        annotations: vec![],
        poses: vec![],
        provenance: None,
    }
}

#[test]
fn target_equal_to_initial_returns_input() {
    let lib = ModelLibrary::builtin();
    let w = world(&lib, 8);
    let initial = vec![dummy_record(), dummy_record()];
    let state = LoopState::new(initial.clone(), w.scene.clone());
    let out = self_learn_loop(state, &w, &lib, 2, &OracleDetector, &SelfLearnParams::default(), None, &mut |_| Ok(())).unwrap();
    assert_eq!(out.state.records, initial);
    assert!(out.state.reports.is_empty());
}

#[test]
fn oracle_loop_is_lossless() {
    let lib = ModelLibrary::asymmetric();
    let w = world(&lib, 9);
    let mut sizes = Vec::new();
    let state = LoopState::new(vec![dummy_record()], w.scene.clone());
    let out = self_learn_loop(state, &w, &lib, 1 + 6, &OracleDetector, &SelfLearnParams::default(), None, &mut |s| {
        sizes.push(s.records.len());
        Ok(())
    })
    .unwrap();
    assert!(!out.halted);
    assert_eq!(out.state.records.len(), 7);
    assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
    for r in &out.state.records[1..] {
        let prov = r.provenance.as_ref().expect("provenance on every added record");
        assert_eq!(prov.scene_id, r.scene_id);
        let report = &out.state.reports[prov.iteration];
        let view = report.views.iter().find(|v| v.view_id == r.view_id).unwrap();
        assert_eq!(r.annotations.len(), view.ground_truth.len(), "{}", r.scene_id);
        for (a, g) in r.annotations.iter().zip(&view.ground_truth) {
            assert_eq!(a.object_id, g.object_id);
            assert!(a.bbox.max_edge_delta(&g.bbox) <= 1, "{} {}: {:?} vs {:?}", r.scene_id, a.object_id, a.bbox, g.bbox);
        }
    }
}

#[test]
fn loop_state_round_trips_and_mock_never_halts_the_loop() {
    let lib = ModelLibrary::builtin();
    let w = world(&lib, 10);
    let det = MockDetector::new(MockDetectorParams::default());
    let state = LoopState::new(vec![], w.scene.clone());
    let out = self_learn_loop(state, &w, &lib, 4, &det, &SelfLearnParams::default(), None, &mut |_| Ok(())).unwrap();
    let json = serde_json::to_string(&out.state).unwrap();
    assert_eq!(serde_json::from_str::<LoopState>(&json).unwrap(), out.state);
    assert!(out.state.records.iter().all(|r| r.annotations.iter().all(|a| a.source == LabelSource::SelfLabeled)));
}
