//! Configuration, dataset generation, evaluation and self-learning runs behind the CLI.

mod config;
mod eval;
mod generate;
mod run;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{BuiltinModels, CameraRig, PipelineConfig};
pub use eval::{
    evaluate_boxes, evaluate_detections, evaluate_poses, mean_iou, summarize_pose_errors, DetectionEval, DetectionStats,
    PoseEval, PoseStats,
};
pub use generate::{audit_view, generate, AuditFailure, GenerateSummary, MANIFEST_NAME, MAX_PENETRATION};
pub use run::{run_selflearn, run_selflearn_with, selflearn_world, summarize_iterations, RunOptions, SelfLearnReport, CHECKPOINT_NAME};

use crate::annotate::{read_dataset, ObjectPose};
use crate::detect::{import_detections, Detector, ViewInput};
use crate::distmatch::PoseMatchCriterion;
use crate::render::RenderedView;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub crate_version: String,
    pub manifest: String,
    pub records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: RunMetadata,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detections: Option<DetectionEval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poses: Option<PoseEval>,
}

/// Score a detection exchange file and/or a pose list against a manifest.
///
/// Detections are keyed by each record's RGB path as written in the manifest;
/// each estimated pose is matched by object id against the first record whose
/// scene contains that object.
pub fn evaluate_manifest(
    manifest: &Path,
    detections: Option<&Path>,
    poses: Option<&Path>,
    iou_threshold: f64,
    crit: &PoseMatchCriterion,
) -> Result<EvalReport> {
    let records = read_dataset(manifest)?;
    let detections = match detections {
        Some(path) => {
            let images: BTreeSet<String> = records.iter().map(|r| r.images.rgb.to_string_lossy().into_owned()).collect();
            let objects: BTreeSet<String> = records.iter().flat_map(|r| r.poses.iter().map(|p| p.object_id.clone())).collect();
            let det = import_detections(path, &images, &objects)?;
            let mut per_view = Vec::with_capacity(records.len());
            for r in &records {
                let path = r.images.rgb.to_string_lossy();
                let empty = RenderedView {
                    width: r.camera.width(),
                    height: r.camera.height(),
                    rgb: Vec::new(),
                    depth: Vec::new(),
                    instance: Vec::new(),
                    camera: r.camera,
                    light: r.light.clone(),
                };
                per_view.push(det.detect(&ViewInput {
                    view: &empty,
                    image_path: &path,
                    key: 0,
                    ground_truth: &[],
                })?);
            }
            let gt: Vec<_> = records.iter().map(|r| r.annotations.clone()).collect();
            Some(evaluate_detections(&per_view, &gt, iou_threshold))
        }
        None => None,
    };
    let poses = match poses {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
            let est: Vec<ObjectPose> = serde_json::from_str(&text)?;
            let mut truth: Vec<ObjectPose> = Vec::new();
            for r in &records {
                for p in &r.poses {
                    if !truth.iter().any(|t| t.object_id == p.object_id) {
                        truth.push(p.clone());
                    }
                }
            }
            Some(evaluate_poses(&est, &truth, crit))
        }
        None => None,
    };
    Ok(EvalReport {
        metadata: RunMetadata {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            manifest: manifest.to_string_lossy().into_owned(),
            records: records.len(),
        },
        detections,
        poses,
    })
}
