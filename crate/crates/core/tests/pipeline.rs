use std::collections::BTreeMap;
use std::path::Path;

use autolabel::annotate::read_dataset;
use autolabel::detect::{export_detections, Detection};
use autolabel::distmatch::PoseMatchCriterion;
use autolabel::harness::*;

fn small_config(n: usize, views: usize, seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig {
        n,
        seed,
        ..PipelineConfig::default()
    };
    c.cameras.views = views;
    c
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "generate.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn ten_records_from_two_views_is_five_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate(&small_config(10, 2, 1), dir.path()).unwrap();
    assert_eq!((s.records, s.scenes), (10, 5));
    assert!(s.audit_failures.is_empty(), "{:?}", s.audit_failures);
    let recs = read_dataset(&dir.path().join(MANIFEST_NAME)).unwrap();
    assert_eq!(recs.len(), 10);
    let mut scenes: Vec<_> = recs.iter().map(|r| r.scene_id.clone()).collect();
    scenes.dedup();
    assert_eq!(scenes.len(), 5);
}

#[test]
fn odd_counts_truncate_the_last_scene() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate(&small_config(7, 3, 2), dir.path()).unwrap();
    assert_eq!((s.records, s.scenes), (7, 3));
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&small_config(6, 3, 9), a.path()).unwrap();
    generate(&small_config(6, 3, 9), b.path()).unwrap();
    assert_eq!(read_tree(a.path()), read_tree(b.path()));
    let c = tempfile::tempdir().unwrap();
    generate(&small_config(6, 3, 10), c.path()).unwrap();
    assert_ne!(read_tree(a.path()), read_tree(c.path()));
}

#[test]
fn ground_truth_detections_score_perfectly_through_the_exchange_file() {
    let dir = tempfile::tempdir().unwrap();
    generate(&small_config(4, 2, 3), dir.path()).unwrap();
    let manifest = dir.path().join(MANIFEST_NAME);
    let recs = read_dataset(&manifest).unwrap();
    let dets: Vec<(String, Detection)> = recs
        .iter()
        .flat_map(|r| {
            r.annotations.iter().map(move |a| {
                (
                    r.images.rgb.to_string_lossy().into_owned(),
                    Detection {
                        object_id: a.object_id.clone(),
                        bbox: a.bbox,
                        confidence: 0.9,
                    },
                )
            })
        })
        .collect();
    let det_path = dir.path().join("dets.jsonl");
    export_detections(&det_path, dets.iter().map(|(p, d)| (p.as_str(), d))).unwrap();
    let poses_path = dir.path().join("poses.json");
    std::fs::write(&poses_path, serde_json::to_string(&recs[0].poses).unwrap()).unwrap();
    let rep = evaluate_manifest(&manifest, Some(&det_path), Some(&poses_path), 0.5, &PoseMatchCriterion::default()).unwrap();
    assert_eq!(rep.detections.as_ref().unwrap().success_rate, 1.0);
    let p = rep.poses.as_ref().unwrap();
    assert_eq!(p.success_rate, 1.0);
    assert!(p.mean_rotation_deg < 1e-9 && p.mean_translation_m < 1e-12);
    let again = evaluate_manifest(&manifest, Some(&det_path), Some(&poses_path), 0.5, &PoseMatchCriterion::default()).unwrap();
    assert_eq!(serde_json::to_string(&rep).unwrap(), serde_json::to_string(&again).unwrap());
}

fn seed_dataset(dir: &Path) -> std::path::PathBuf {
    generate(&small_config(3, 3, 4), dir).unwrap();
    dir.join(MANIFEST_NAME)
}

fn loop_config(n_prime: usize) -> PipelineConfig {
    let mut c = small_config(3, 3, 5);
    c.n_prime = n_prime;
    c
}

#[test]
fn resumed_run_equals_uninterrupted_run() {
    let data = tempfile::tempdir().unwrap();
    let manifest = seed_dataset(data.path());
    let cfg = loop_config(12);
    let full = tempfile::tempdir().unwrap();
    let a = run_selflearn(&cfg, &manifest, full.path(), &RunOptions::default()).unwrap();
    let split = tempfile::tempdir().unwrap();
    let first = run_selflearn(
        &cfg,
        &manifest,
        split.path(),
        &RunOptions {
            resume: false,
            max_iterations: Some(1),
        },
    )
    .unwrap();
    assert_eq!(first.iterations, 1);
    let b = run_selflearn(
        &cfg,
        &manifest,
        split.path(),
        &RunOptions {
            resume: true,
            max_iterations: None,
        },
    )
    .unwrap();
    assert!(a.iterations > 1);
    assert_eq!(a, b);
    let ra = std::fs::read(full.path().join(MANIFEST_NAME)).unwrap();
    let rb = std::fs::read(split.path().join(MANIFEST_NAME)).unwrap();
    assert_eq!(ra, rb);
    let grown = read_dataset(&full.path().join(MANIFEST_NAME)).unwrap();
    assert_eq!(grown.len(), 12);
    assert!(grown[3..].iter().all(|r| r.provenance.is_some()));
    assert!(a.self_label_boxes > 0 && a.raw_confident_boxes > 0);
}

#[test]
fn target_below_current_size_is_a_no_op() {
    let data = tempfile::tempdir().unwrap();
    let manifest = seed_dataset(data.path());
    let out = tempfile::tempdir().unwrap();
    let r = run_selflearn(&loop_config(2), &manifest, out.path(), &RunOptions::default()).unwrap();
    assert_eq!((r.records, r.iterations), (3, 0));
    assert_eq!(read_dataset(&out.path().join(MANIFEST_NAME)).unwrap().len(), 3);
}
