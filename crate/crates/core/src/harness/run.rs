use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::eval::{evaluate_boxes, mean_iou, summarize_pose_errors, DetectionEval, PoseEval};
use super::generate::MANIFEST_NAME;
use super::PipelineConfig;
use crate::annotate::{read_dataset, write_dataset, Annotation, DatasetRecord};
use crate::detect::{Detector, MockDetector};
use crate::geom::BBox2D;
use crate::physim::simulate_scene;
use crate::render::pick_lighting;
use crate::selflearn::{default_configs, self_learn_loop, IterationReport, LoopState, World};
use crate::{rng, Error, Result};

pub const CHECKPOINT_NAME: &str = "checkpoint.json";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Continue from `checkpoint.json` in the output directory when present.
    pub resume: bool,
    /// Stop after this many iterations in this invocation (the checkpoint stays resumable).
    pub max_iterations: Option<usize>,
}

/// Raw detections against self-labels, both scored against simulation truth.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelfLearnReport {
    pub initial_records: usize,
    pub records: usize,
    pub iterations: usize,
    /// Stopped on the fruitless limit before reaching the target size.
    pub halted: bool,
    pub raw_confident: DetectionEval,
    pub raw_confident_mean_iou: f64,
    pub raw_confident_boxes: usize,
    pub self_labels: DetectionEval,
    pub self_label_mean_iou: f64,
    pub self_label_boxes: usize,
    pub poses: PoseEval,
    pub rejected: usize,
    pub unresolved: usize,
}

/// Score the views of every iteration: confident raw detections and self-labels
/// against the simulator's labels, and accepted poses against simulated poses.
pub fn summarize_iterations(reports: &[IterationReport], cfg: &PipelineConfig) -> SelfLearnReport {
    let views: Vec<_> = reports.iter().flat_map(|r| &r.views).collect();
    let gt: Vec<Vec<Annotation>> = views.iter().map(|v| v.ground_truth.clone()).collect();
    let raw: Vec<Vec<(&str, BBox2D)>> = views
        .iter()
        .map(|v| {
            v.detections
                .iter()
                .filter(|d| d.confidence > cfg.aggregate.threshold)
                .map(|d| (d.object_id.as_str(), d.bbox))
                .collect()
        })
        .collect();
    let labels: Vec<Vec<(&str, BBox2D)>> = views.iter().map(|v| v.self_labels.iter().map(|a| (a.object_id.as_str(), a.bbox)).collect()).collect();
    let (raw_iou, raw_n) = mean_iou(&raw, &gt);
    let (sl_iou, sl_n) = mean_iou(&labels, &gt);
    let errors: Vec<(String, f64, f64)> = reports
        .iter()
        .flat_map(|r| &r.estimates)
        .filter_map(|e| Some((e.object_id.clone(), e.rotation_error_deg?, e.translation_error_m?)))
        .collect();
    SelfLearnReport {
        iterations: reports.len(),
        raw_confident: evaluate_boxes(&raw, &gt, cfg.iou_threshold),
        raw_confident_mean_iou: raw_iou,
        raw_confident_boxes: raw_n,
        self_labels: evaluate_boxes(&labels, &gt, cfg.iou_threshold),
        self_label_mean_iou: sl_iou,
        self_label_boxes: sl_n,
        poses: summarize_pose_errors(&errors, &cfg.criteria),
        rejected: reports.iter().map(|r| r.rejected.len()).sum(),
        unresolved: reports.iter().map(|r| r.unresolved.len()).sum(),
        ..SelfLearnReport::default()
    }
}

/// The held-out world the loop labels: its own scene and lighting streams.
pub fn selflearn_world(cfg: &PipelineConfig) -> Result<World> {
    let lib = cfg.library()?;
    let seed = rng::derive(cfg.seed, &[rng::hash_str("world")]);
    let (scene, _) = simulate_scene(&lib, &cfg.surface, &cfg.physics, cfg.objects_per_scene, seed)?;
    let light = pick_lighting(&mut rng::stream(seed, &[rng::hash_str("light")]), &cfg.lighting)?;
    Ok(World {
        configs: default_configs(&scene.surface),
        scene,
        cameras: cfg.camera_list()?,
        light,
    })
}

fn absolute_images(records: &mut [DatasetRecord], root: &Path) {
    for r in records {
        for p in [&mut r.images.rgb, &mut r.images.depth, &mut r.images.instance] {
            *p = root.join(&*p);
        }
    }
}

fn save_checkpoint(dir: &Path, state: &LoopState) -> Result<()> {
    let tmp = dir.join(format!("{CHECKPOINT_NAME}.tmp"));
    std::fs::write(&tmp, serde_json::to_vec(state)?).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, dir.join(CHECKPOINT_NAME)).map_err(|e| Error::io(dir, e))?;
    write_dataset(&dir.join(MANIFEST_NAME), &state.records)
}

/// Grow the dataset at `manifest` to `cfg.n_prime` records with the mock
/// detector, writing images, the grown manifest and a checkpoint per iteration
/// under `out`.
pub fn run_selflearn(cfg: &PipelineConfig, manifest: &Path, out: &Path, opts: &RunOptions) -> Result<SelfLearnReport> {
    run_selflearn_with(cfg, manifest, out, opts, &MockDetector::new(cfg.detector.clone()))
}

pub fn run_selflearn_with(cfg: &PipelineConfig, manifest: &Path, out: &Path, opts: &RunOptions, detector: &dyn Detector) -> Result<SelfLearnReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut initial = read_dataset(manifest)?;
    let root: PathBuf = manifest
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .canonicalize()
        .map_err(|e| Error::io(manifest, e))?;
    absolute_images(&mut initial, &root);
    let initial_records = initial.len();
    let lib = cfg.library()?;
    let world = selflearn_world(cfg)?;
    let checkpoint = out.join(CHECKPOINT_NAME);
    let state = if opts.resume && checkpoint.exists() {
        let text = std::fs::read(&checkpoint).map_err(|e| Error::io(&checkpoint, e))?;
        serde_json::from_slice(&text)?
    } else {
        LoopState::new(initial, world.scene.clone())
    };
    if state.records.len() >= cfg.n_prime {
        log::warn!("dataset already has {} records (target {}); nothing to do", state.records.len(), cfg.n_prime);
    }
    let start_iteration = state.iteration;
    let limit = opts.max_iterations;
    let mut stop = |s: &LoopState| -> Result<()> {
        save_checkpoint(out, s)?;
        match limit {
            Some(m) if s.iteration - start_iteration >= m => Err(Error::invalid("run", "iteration limit reached")),
            _ => Ok(()),
        }
    };
    let params = cfg.selflearn_params();
    let (state, halted) = match self_learn_loop(state, &world, &lib, cfg.n_prime, detector, &params, Some(out), &mut stop) {
        Ok(o) => (o.state, o.halted),
        Err(Error::Invalid { what: "run", .. }) => {
            let text = std::fs::read(&checkpoint).map_err(|e| Error::io(&checkpoint, e))?;
            (serde_json::from_slice::<LoopState>(&text)?, false)
        }
        Err(e) => return Err(e),
    };
    write_dataset(&out.join(MANIFEST_NAME), &state.records)?;
    Ok(SelfLearnReport {
        initial_records,
        records: state.records.len(),
        halted,
        ..summarize_iterations(&state.reports, cfg)
    })
}
