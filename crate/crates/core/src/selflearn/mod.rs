//! Multi-view self-labeling: detect in every view, lift confident boxes to 3D,
//! register the object models, and project the estimated poses back into all
//! views as labels.

mod grow;
mod reconfig;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::annotate::{project_bboxes, Annotation, LabelSource};
use crate::detect::{Detection, Detector, ViewInput};
use crate::exec::par_map;
use crate::geom::{rotation_error_deg, translation_error_m, BBox2D, Camera, Pose6D};
use crate::models::ModelLibrary;
use crate::physim::Scene;
use crate::register::{backproject, clean_cloud, register_segment, Frame, ModelTarget, PointCloud, RegisterParams};
use crate::render::{rasterize, LightConfig, RenderedView, ViewPaths};
use crate::{rng, Error, Result};

pub use grow::{self_learn_loop, IterationReport, LoopOutcome, LoopState, SelfLearnParams, ViewReport, World};
pub use reconfig::{default_configs, place_at_config, reconfigure_scene};

/// One captured view. `ground_truth` holds the simulator's labels; only
/// simulated detectors and audits read it.
#[derive(Clone, Debug)]
pub struct CapturedView {
    pub view_id: String,
    pub image: RenderedView,
    pub ground_truth: Vec<Annotation>,
}

impl CapturedView {
    pub fn camera(&self) -> &Camera {
        &self.image.camera
    }
}

/// All views of one scene state.
#[derive(Clone, Debug)]
pub struct ViewSet {
    /// The simulated scene, kept for audits only.
    pub scene: Scene,
    pub views: Vec<CapturedView>,
}

impl ViewSet {
    pub fn image_path(&self, view: usize) -> String {
        ViewPaths::new(&self.scene.id, &self.views[view].view_id).rgb.to_string_lossy().into_owned()
    }

    /// Stable key seeding per-view detector randomness.
    pub fn view_key(&self, view: usize) -> u64 {
        rng::derive(rng::hash_str(&self.scene.id), &[rng::hash_str(&self.views[view].view_id)])
    }
}

/// Render `scene` from every camera.
pub fn capture(scene: &Scene, library: &ModelLibrary, cameras: &[Camera], light: &LightConfig, min_visibility: f64) -> Result<ViewSet> {
    if cameras.len() < 2 {
        return Err(Error::invalid("view set", "at least two camera views are required"));
    }
    for (i, a) in cameras.iter().enumerate() {
        if cameras[i + 1..].iter().any(|b| b.pose == a.pose) {
            return Err(Error::invalid("view set", format!("camera {i} is duplicated")));
        }
    }
    let views = par_map(cameras, |cam| -> Result<(RenderedView, Vec<Annotation>)> {
        let image = rasterize(scene, library, cam, light)?;
        let gt = project_bboxes(scene, library, cam, &image.instance, min_visibility)?;
        Ok((image, gt))
    });
    let views = views
        .into_iter()
        .enumerate()
        .map(|(k, v)| {
            v.map(|(image, ground_truth)| CapturedView {
                view_id: format!("v{k}"),
                image,
                ground_truth,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ViewSet {
        scene: scene.clone(),
        views,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregateParams {
    /// Detections at or below this confidence are ignored.
    pub threshold: f64,
    /// Drop points that project outside the object's confident box in another view.
    pub carve: bool,
    /// Box growth for carving, as a fraction of the box diagonal.
    pub carve_margin: f64,
}

impl Default for AggregateParams {
    fn default() -> Self {
        AggregateParams {
            threshold: crate::detect::DEFAULT_CONFIDENCE_THRESHOLD,
            carve: true,
            carve_margin: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectCloud {
    pub cloud: PointCloud,
    /// Views with a confident detection of the object.
    pub views: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Aggregation {
    /// Raw detections per view, in view order.
    pub detections: Vec<Vec<Detection>>,
    pub clouds: BTreeMap<String, ObjectCloud>,
    /// Detected objects without a confident detection in any view.
    pub unresolved: Vec<String>,
    /// Views whose detector call failed, with the error; they contribute nothing.
    pub failed_views: Vec<(String, String)>,
}

fn grown(b: &BBox2D, margin: f64) -> [f64; 4] {
    let m = margin * b.diagonal();
    [b.x_min as f64 - m, b.y_min as f64 - m, b.x_max as f64 + m, b.y_max as f64 + m]
}

/// Run the detector on every view and union, per object, the backprojected depth
/// inside its confident boxes.
pub fn aggregate_object_clouds(views: &ViewSet, detector: &dyn Detector, params: &AggregateParams) -> Aggregation {
    let idx: Vec<usize> = (0..views.views.len()).collect();
    let detections = par_map(&idx, |&k| {
        let v = &views.views[k];
        let path = views.image_path(k);
        detector.detect(&ViewInput {
            view: &v.image,
            image_path: &path,
            key: views.view_key(k),
            ground_truth: &v.ground_truth,
        })
    });
    let mut failed_views = Vec::new();
    let detections: Vec<Vec<Detection>> = detections
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            r.unwrap_or_else(|e| {
                failed_views.push((views.views[k].view_id.clone(), e.to_string()));
                Vec::new()
            })
        })
        .collect();

    // Highest-confidence detection per object and view.
    let mut boxes: BTreeMap<String, Vec<(usize, BBox2D)>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (k, dets) in detections.iter().enumerate() {
        let mut best: BTreeMap<&str, &Detection> = BTreeMap::new();
        for d in dets {
            seen.insert(d.object_id.clone());
            if d.confidence > params.threshold && best.get(d.object_id.as_str()).map_or(true, |b| d.confidence > b.confidence) {
                best.insert(&d.object_id, d);
            }
        }
        for (id, d) in best {
            boxes.entry(id.to_string()).or_default().push((k, d.bbox));
        }
    }

    let mut clouds = BTreeMap::new();
    for (id, list) in &boxes {
        let mut points = Vec::new();
        for &(k, bbox) in list {
            let v = &views.views[k];
            let part = backproject(&v.image.depth, &bbox, v.camera());
            points.extend(part.points.into_iter().filter(|p| {
                !params.carve
                    || list.iter().filter(|(j, _)| *j != k).all(|&(j, b)| {
                        let cam = views.views[j].camera();
                        match cam.project_point(p) {
                            Ok([u, w]) if u >= 0.0 && w >= 0.0 && u < cam.width() as f64 && w < cam.height() as f64 => {
                                let g = grown(&b, params.carve_margin);
                                u >= g[0] && w >= g[1] && u < g[2] && w < g[3]
                            }
                            _ => true,
                        }
                    })
            }));
        }
        clouds.insert(
            id.clone(),
            ObjectCloud {
                cloud: PointCloud::new(points, Frame::World),
                views: list.iter().map(|(k, _)| views.views[*k].view_id.clone()).collect(),
            },
        );
    }
    let unresolved = seen.into_iter().filter(|id| !boxes.contains_key(id)).collect();
    Aggregation {
        detections,
        clouds,
        unresolved,
        failed_views,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub object_id: String,
    /// Model-to-world.
    pub pose: Pose6D,
    pub lcp: f64,
    pub residual: f64,
    pub views: Vec<String>,
    /// Segment size after cleaning.
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub object_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    /// Estimates that passed the LCP gate.
    pub accepted: Vec<PoseEstimate>,
    pub rejected: Vec<Rejection>,
}

/// Registration targets for every model in the library.
pub fn model_targets(library: &ModelLibrary, params: &RegisterParams) -> BTreeMap<String, ModelTarget> {
    let models: Vec<_> = library.iter().collect();
    let targets = par_map(&models, |m| ModelTarget::new(m, &params.congruent));
    models.iter().map(|m| m.id().to_string()).zip(targets).collect()
}

/// Clean and register every aggregated cloud; estimates below the LCP gate and
/// per-object failures are reported, never fatal.
pub fn estimate_poses(
    clouds: &BTreeMap<String, ObjectCloud>,
    targets: &BTreeMap<String, ModelTarget>,
    surface: &crate::physim::SurfaceSpec,
    params: &RegisterParams,
    seed: u64,
) -> Result<Estimates> {
    params.validate()?;
    let items: Vec<(&String, &ObjectCloud)> = clouds.iter().collect();
    let results = par_map(&items, |(id, oc)| -> std::result::Result<PoseEstimate, String> {
        assert_eq!(oc.cloud.frame, Frame::World, "registration needs world-frame clouds");
        let target = targets.get(*id).ok_or_else(|| Error::UnknownObject(id.to_string()).to_string())?;
        let clean = clean_cloud(&oc.cloud, surface, &params.clean).map_err(|e| e.to_string())?;
        let res = register_segment(&clean.points, target, params, rng::derive(seed, &[rng::hash_str(id)])).map_err(|e| e.to_string())?;
        if res.lcp < params.min_lcp {
            return Err(format!("lcp {:.3} below the gate {:.3}", res.lcp, params.min_lcp));
        }
        Ok(PoseEstimate {
            object_id: id.to_string(),
            pose: res.pose,
            lcp: res.lcp,
            residual: res.residual,
            views: oc.views.clone(),
            points: clean.points.len(),
        })
    });
    let mut out = Estimates::default();
    for ((id, _), r) in items.iter().zip(results) {
        match r {
            Ok(e) => out.accepted.push(e),
            Err(reason) => out.rejected.push(Rejection {
                object_id: id.to_string(),
                reason,
            }),
        }
    }
    Ok(out)
}

/// Rebuild the scene from the accepted estimates and label every view from the
/// re-rendered instance maps. Returns the labels and instance maps per view.
pub fn relabel_views(
    estimates: &[PoseEstimate],
    views: &ViewSet,
    library: &ModelLibrary,
    min_visibility: f64,
) -> Result<Vec<(Vec<Annotation>, Vec<u16>)>> {
    let poses = estimates.iter().map(|e| (e.object_id.clone(), e.pose)).collect();
    let rebuilt = Scene::new(format!("{}-estimate", views.scene.id), views.scene.surface.clone(), poses, views.scene.seed);
    par_map(&views.views, |v| {
        let img = rasterize(&rebuilt, library, v.camera(), &v.image.light)?;
        let mut labels = project_bboxes(&rebuilt, library, v.camera(), &img.instance, min_visibility)?;
        for a in &mut labels {
            a.source = LabelSource::SelfLabeled;
        }
        Ok((labels, img.instance))
    })
    .into_iter()
    .collect()
}

/// Pose errors of an estimate against the simulated scene, if the object is in it.
pub fn pose_errors(estimate: &PoseEstimate, truth: &Scene) -> Option<(f64, f64)> {
    let gt = truth.pose_of(&estimate.object_id)?;
    Some((rotation_error_deg(&estimate.pose, gt), translation_error_m(&estimate.pose, gt)))
}

/// Everything one pass over a scene state produces.
#[derive(Clone, Debug)]
pub struct ScenePass {
    pub views: ViewSet,
    pub aggregation: Aggregation,
    pub estimates: Estimates,
    /// Self-labels and re-rendered instance map per view.
    pub labels: Vec<(Vec<Annotation>, Vec<u16>)>,
}

/// Capture, detect, aggregate, estimate and relabel one scene state.
#[allow(clippy::too_many_arguments)]
pub fn process_scene(
    scene: &Scene,
    library: &ModelLibrary,
    targets: &BTreeMap<String, ModelTarget>,
    cameras: &[Camera],
    light: &LightConfig,
    detector: &dyn Detector,
    params: &SelfLearnParams,
    seed: u64,
) -> Result<ScenePass> {
    let views = capture(scene, library, cameras, light, params.min_visibility)?;
    let aggregation = aggregate_object_clouds(&views, detector, &params.aggregate);
    let estimates = estimate_poses(&aggregation.clouds, targets, &scene.surface, &params.register, seed)?;
    let labels = relabel_views(&estimates.accepted, &views, library, params.min_visibility)?;
    Ok(ScenePass {
        views,
        aggregation,
        estimates,
        labels,
    })
}

#[cfg(test)]
mod tests;
