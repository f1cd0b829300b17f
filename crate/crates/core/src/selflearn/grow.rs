//! The dataset growth loop: label the current scene state from every view,
//! append the labels, move one object, repeat.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{pose_errors, process_scene, reconfigure_scene, AggregateParams, Rejection};
use crate::annotate::{Annotation, DatasetRecord, ObjectPose, Provenance, DEFAULT_MIN_VISIBILITY};
use crate::detect::{Detection, Detector};
use crate::geom::{Camera, Pose6D};
use crate::models::ModelLibrary;
use crate::physim::{PhysicsParams, Scene};
use crate::register::RegisterParams;
use crate::render::{LightConfig, RenderedView, ViewPaths};
use crate::{rng, Error, Result};

/// The world the loop perceives and manipulates.
#[derive(Clone, Debug)]
pub struct World {
    pub scene: Scene,
    pub cameras: Vec<Camera>,
    pub light: LightConfig,
    /// Surface-local placements an object may be moved to.
    pub configs: Vec<Pose6D>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfLearnParams {
    pub aggregate: AggregateParams,
    pub register: RegisterParams,
    pub min_visibility: f64,
    /// Stop after this many consecutive iterations that add no record.
    pub max_fruitless: usize,
    pub physics: PhysicsParams,
    pub reconfigure_retries: usize,
    pub seed: u64,
}

impl Default for SelfLearnParams {
    fn default() -> Self {
        SelfLearnParams {
            aggregate: AggregateParams::default(),
            register: RegisterParams::default(),
            min_visibility: DEFAULT_MIN_VISIBILITY,
            max_fruitless: 10,
            physics: PhysicsParams::default(),
            reconfigure_retries: 5,
            seed: 0,
        }
    }
}

impl SelfLearnParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.aggregate.threshold) {
            return Err(Error::invalid("self-learn params", "confidence threshold must lie in [0, 1]"));
        }
        if self.max_fruitless == 0 {
            return Err(Error::invalid("self-learn params", "max_fruitless must be positive"));
        }
        self.register.validate()?;
        self.physics.validate()
    }
}

/// Per-view outcome, with the simulator's labels for evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewReport {
    pub view_id: String,
    pub ground_truth: Vec<Annotation>,
    pub detections: Vec<Detection>,
    pub self_labels: Vec<Annotation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub object_id: String,
    pub lcp: f64,
    pub residual: f64,
    pub rotation_error_deg: Option<f64>,
    pub translation_error_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub scene_id: String,
    pub views: Vec<ViewReport>,
    pub estimates: Vec<EstimateReport>,
    pub rejected: Vec<Rejection>,
    pub unresolved: Vec<String>,
    pub failed_views: Vec<(String, String)>,
    pub added: usize,
    /// Object moved after labeling, or why the scene stayed as it was.
    pub moved: std::result::Result<String, String>,
}

/// Resumable loop state; a checkpoint is this value serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub iteration: usize,
    pub scene: Scene,
    pub fruitless: usize,
    pub records: Vec<DatasetRecord>,
    pub reports: Vec<IterationReport>,
}

impl LoopState {
    pub fn new(initial: Vec<DatasetRecord>, scene: Scene) -> Self {
        LoopState {
            iteration: 0,
            scene,
            fruitless: 0,
            records: initial,
            reports: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopOutcome {
    pub state: LoopState,
    /// The loop stopped on the fruitless limit before reaching the target size.
    pub halted: bool,
}

fn scene_id(seed: u64, iteration: usize) -> String {
    format!("sl{:08x}-{iteration:04}", rng::mix(seed) as u32)
}

/// Grow `state.records` to `target` records by self-labeling `world`.
///
/// Iterations are sequential; views within one are processed concurrently.
/// Detector and registration failures skip views or objects; the loop halts
/// after `max_fruitless` consecutive iterations that add nothing. When
/// `out_dir` is given, each added view's RGB and depth are written there along
/// with the instance map re-rendered from the estimated poses. `checkpoint` is
/// called with the state after every iteration.
#[allow(clippy::too_many_arguments)]
pub fn self_learn_loop(
    mut state: LoopState,
    world: &World,
    library: &ModelLibrary,
    target: usize,
    detector: &dyn Detector,
    params: &SelfLearnParams,
    out_dir: Option<&Path>,
    checkpoint: &mut dyn FnMut(&LoopState) -> Result<()>,
) -> Result<LoopOutcome> {
    params.validate()?;
    if state.records.len() >= target {
        return Ok(LoopOutcome { state, halted: false });
    }
    let targets = super::model_targets(library, &params.register);
    while state.records.len() < target && state.fruitless < params.max_fruitless {
        let iteration = state.iteration;
        let mut scene = state.scene.clone();
        scene.id = scene_id(params.seed, iteration);
        let seed = rng::derive(params.seed, &[iteration as u64]);
        let pass = process_scene(&scene, library, &targets, &world.cameras, &world.light, detector, params, seed)?;

        let lcp: BTreeMap<String, f64> = pass.estimates.accepted.iter().map(|e| (e.object_id.clone(), e.lcp)).collect();
        let poses: Vec<ObjectPose> = pass
            .estimates
            .accepted
            .iter()
            .map(|e| ObjectPose {
                object_id: e.object_id.clone(),
                pose: e.pose,
            })
            .collect();
        let mut added = 0;
        let mut views = Vec::with_capacity(pass.views.views.len());
        for (k, v) in pass.views.views.iter().enumerate() {
            let (labels, instance) = &pass.labels[k];
            if !labels.is_empty() && state.records.len() < target {
                let images = match out_dir {
                    Some(dir) => RenderedView {
                        instance: instance.clone(),
                        ..v.image.clone()
                    }
                    .write(dir, &scene.id, &v.view_id)?,
                    None => ViewPaths::new(&scene.id, &v.view_id),
                };
                state.records.push(DatasetRecord {
                    scene_id: scene.id.clone(),
                    view_id: v.view_id.clone(),
                    images,
                    camera: v.image.camera,
                    light: v.image.light.clone(),
                    annotations: labels.clone(),
                    poses: poses.clone(),
                    provenance: Some(Provenance {
                        scene_id: scene.id.clone(),
                        iteration,
                        lcp: lcp.clone(),
                    }),
                });
                added += 1;
            }
            views.push(ViewReport {
                view_id: v.view_id.clone(),
                ground_truth: v.ground_truth.clone(),
                detections: pass.aggregation.detections[k].clone(),
                self_labels: labels.clone(),
            });
        }
        let estimates = pass
            .estimates
            .accepted
            .iter()
            .map(|e| {
                let err = pose_errors(e, &scene);
                EstimateReport {
                    object_id: e.object_id.clone(),
                    lcp: e.lcp,
                    residual: e.residual,
                    rotation_error_deg: err.map(|x| x.0),
                    translation_error_m: err.map(|x| x.1),
                }
            })
            .collect();

        let mut r = rng::stream(params.seed, &[iteration as u64, rng::hash_str("reconfigure")]);
        let moved = match reconfigure_scene(&state.scene, library, &world.configs, &params.physics, &mut r, params.reconfigure_retries) {
            Ok((next, id)) => {
                state.scene = next;
                Ok(id)
            }
            Err(e) => Err(e.to_string()),
        };
        state.fruitless = if added == 0 { state.fruitless + 1 } else { 0 };
        state.reports.push(IterationReport {
            iteration,
            scene_id: scene.id,
            views,
            estimates,
            rejected: pass.estimates.rejected,
            unresolved: pass.aggregation.unresolved,
            failed_views: pass.aggregation.failed_views,
            added,
            moved,
        });
        state.iteration += 1;
        checkpoint(&state)?;
    }
    let halted = state.records.len() < target;
    Ok(LoopOutcome { state, halted })
}
