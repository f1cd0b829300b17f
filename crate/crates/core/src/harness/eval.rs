use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotate::{Annotation, ObjectPose};
use crate::detect::Detection;
use crate::distmatch::PoseMatchCriterion;
use crate::geom::{rotation_error_deg, translation_error_m, BBox2D};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    pub ground_truth: usize,
    pub successes: usize,
}

impl DetectionStats {
    pub fn rate(&self) -> f64 {
        if self.ground_truth == 0 {
            0.0
        } else {
            self.successes as f64 / self.ground_truth as f64
        }
    }
}

/// Detection success at an IoU threshold: a ground-truth box counts when some
/// detection of the same object overlaps it with IoU above the threshold.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionEval {
    pub iou_threshold: f64,
    pub ground_truth: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub per_object: BTreeMap<String, DetectionStats>,
}

/// Score per-view detections against per-view ground truth (same view order).
pub fn evaluate_detections(detections: &[Vec<Detection>], ground_truth: &[Vec<Annotation>], iou_threshold: f64) -> DetectionEval {
    let boxes: Vec<Vec<(&str, BBox2D)>> = detections.iter().map(|v| v.iter().map(|d| (d.object_id.as_str(), d.bbox)).collect()).collect();
    evaluate_boxes(&boxes, ground_truth, iou_threshold)
}

/// As [`evaluate_detections`], for any per-view list of labelled boxes.
pub fn evaluate_boxes(boxes: &[Vec<(&str, BBox2D)>], ground_truth: &[Vec<Annotation>], iou_threshold: f64) -> DetectionEval {
    let mut per_object: BTreeMap<String, DetectionStats> = BTreeMap::new();
    for (k, gts) in ground_truth.iter().enumerate() {
        let dets = boxes.get(k).map(Vec::as_slice).unwrap_or(&[]);
        for g in gts {
            let hit = dets.iter().any(|(id, b)| *id == g.object_id && b.iou(&g.bbox) > iou_threshold);
            let s = per_object.entry(g.object_id.clone()).or_default();
            s.ground_truth += 1;
            s.successes += usize::from(hit);
        }
    }
    let ground_truth = per_object.values().map(|s| s.ground_truth).sum();
    let successes = per_object.values().map(|s| s.successes).sum();
    let total = DetectionStats { ground_truth, successes };
    DetectionEval {
        iou_threshold,
        ground_truth,
        successes,
        success_rate: total.rate(),
        per_object,
    }
}

/// Mean IoU of each box with the ground-truth box of the same object in its view
/// (0 when the object has no ground truth there), and the number of boxes.
pub fn mean_iou(boxes: &[Vec<(&str, BBox2D)>], ground_truth: &[Vec<Annotation>]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for (k, view) in boxes.iter().enumerate() {
        let gts = ground_truth.get(k).map(Vec::as_slice).unwrap_or(&[]);
        for (id, b) in view {
            sum += gts.iter().find(|g| g.object_id == *id).map_or(0.0, |g| g.bbox.iou(b));
            n += 1;
        }
    }
    (if n == 0 { 0.0 } else { sum / n as f64 }, n)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseStats {
    pub count: usize,
    pub successes: usize,
    pub mean_rotation_deg: f64,
    pub mean_translation_m: f64,
}

/// Pose success under a criterion plus mean errors over all scored estimates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseEval {
    pub criterion: PoseMatchCriterion,
    pub count: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_rotation_deg: f64,
    pub mean_translation_m: f64,
    pub per_object: BTreeMap<String, PoseStats>,
    /// Estimates of objects without ground truth; excluded from the statistics.
    pub unknown: Vec<String>,
}

/// Pose statistics from already measured `(object id, rotation deg, translation m)` errors.
pub fn summarize_pose_errors(errors: &[(String, f64, f64)], crit: &PoseMatchCriterion) -> PoseEval {
    let mut per_object: BTreeMap<String, PoseStats> = BTreeMap::new();
    for (id, r, t) in errors {
        let s = per_object.entry(id.clone()).or_default();
        s.count += 1;
        s.successes += usize::from(crit.within(*r, *t));
        s.mean_rotation_deg += r;
        s.mean_translation_m += t;
    }
    let count = errors.len();
    let successes = per_object.values().map(|s| s.successes).sum();
    let (rs, ts) = errors.iter().fold((0.0, 0.0), |(a, b), (_, r, t)| (a + r, b + t));
    for s in per_object.values_mut() {
        s.mean_rotation_deg /= s.count as f64;
        s.mean_translation_m /= s.count as f64;
    }
    let div = |x: f64| if count == 0 { 0.0 } else { x / count as f64 };
    PoseEval {
        criterion: *crit,
        count,
        successes,
        success_rate: div(successes as f64),
        mean_rotation_deg: div(rs),
        mean_translation_m: div(ts),
        per_object,
        unknown: Vec::new(),
    }
}

/// Score estimated poses against ground-truth poses of the same scene.
pub fn evaluate_poses(estimates: &[ObjectPose], truth: &[ObjectPose], crit: &PoseMatchCriterion) -> PoseEval {
    let mut errors = Vec::new();
    let mut unknown = Vec::new();
    for e in estimates {
        match truth.iter().find(|t| t.object_id == e.object_id) {
            Some(t) => errors.push((e.object_id.clone(), rotation_error_deg(&e.pose, &t.pose), translation_error_m(&e.pose, &t.pose))),
            None => unknown.push(e.object_id.clone()),
        }
    }
    PoseEval {
        unknown,
        ..summarize_pose_errors(&errors, crit)
    }
}
