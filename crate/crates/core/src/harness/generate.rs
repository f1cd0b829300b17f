use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::PipelineConfig;
use crate::annotate::{mask_bbox, project_bboxes, write_dataset, DatasetRecord, ObjectPose};
use crate::exec::par_map;
use crate::geom::Camera;
use crate::models::ModelLibrary;
use crate::physim::simulate_scene;
use crate::render::{pick_lighting, rasterize, RenderedView};
use crate::{rng, Result};

/// Largest tolerated hull penetration after settling, meters.
pub const MAX_PENETRATION: f64 = 0.002;

pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditFailure {
    pub scene_id: String,
    pub view_id: Option<String>,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub records: usize,
    pub scenes: usize,
    pub audit_failures: Vec<AuditFailure>,
    pub seconds: f64,
    pub records_per_second: f64,
}

/// Check every annotation against the instance map it came from and the image bounds.
pub fn audit_view(record: &DatasetRecord, view: &RenderedView, scene_ids: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for a in &record.annotations {
        if !a.bbox.within(view.width, view.height) {
            out.push(format!("`{}` box outside the image", a.object_id));
        }
        let Some(k) = scene_ids.iter().position(|id| *id == a.object_id) else {
            out.push(format!("`{}` is not in the scene", a.object_id));
            continue;
        };
        match mask_bbox(&view.instance, view.width, (k + 1) as u16) {
            Some((b, _)) if b == a.bbox => {}
            other => out.push(format!("`{}` box {:?} disagrees with its mask {:?}", a.object_id, a.bbox, other.map(|o| o.0))),
        }
    }
    out
}

struct SceneOutput {
    records: Vec<DatasetRecord>,
    failures: Vec<AuditFailure>,
}

fn scene_seed(seed: u64, index: usize) -> u64 {
    rng::derive(seed, &[rng::hash_str("scene"), index as u64])
}

fn generate_scene(cfg: &PipelineConfig, lib: &ModelLibrary, cams: &[Camera], index: usize, views: usize, out: &Path) -> Result<SceneOutput> {
    let seed = scene_seed(cfg.seed, index);
    let (scene, report) = simulate_scene(lib, &cfg.surface, &cfg.physics, cfg.objects_per_scene, seed)?;
    let mut failures = Vec::new();
    let fail = |reason: String, view: Option<&str>| AuditFailure {
        scene_id: scene.id.clone(),
        view_id: view.map(str::to_string),
        reason,
    };
    if !report.settled {
        failures.push(fail(format!("did not settle within {} steps", report.steps), None));
    }
    if report.penetration.max() > MAX_PENETRATION {
        failures.push(fail(format!("penetration {:.4} m", report.penetration.max()), None));
    }
    let light = pick_lighting(&mut rng::stream(seed, &[rng::hash_str("light")]), &cfg.lighting)?;
    let poses: Vec<ObjectPose> = scene
        .placements
        .iter()
        .map(|p| ObjectPose {
            object_id: p.object_id.clone(),
            pose: p.pose,
        })
        .collect();
    let ids: Vec<String> = poses.iter().map(|p| p.object_id.clone()).collect();
    let mut records = Vec::with_capacity(views);
    for (k, cam) in cams.iter().take(views).enumerate() {
        let view_id = format!("v{k}");
        let img = rasterize(&scene, lib, cam, &light)?;
        let annotations = project_bboxes(&scene, lib, cam, &img.instance, cfg.min_visibility)?;
        let images = img.write(out, &scene.id, &view_id)?;
        let record = DatasetRecord {
            scene_id: scene.id.clone(),
            view_id: view_id.clone(),
            images,
            camera: *cam,
            light: light.clone(),
            annotations,
            poses: poses.clone(),
            provenance: None,
        };
        failures.extend(audit_view(&record, &img, &ids).into_iter().map(|r| fail(r, Some(&view_id))));
        records.push(record);
    }
    Ok(SceneOutput { records, failures })
}

/// Simulate, render and label scenes until `cfg.n` records exist; writes images
/// and `manifest.jsonl` under `out`. Every camera view of a scene becomes one
/// record (the last scene may use fewer views). Deterministic in `cfg.seed`.
pub fn generate(cfg: &PipelineConfig, out: &Path) -> Result<GenerateSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let lib = cfg.library()?;
    let cams = cfg.camera_list()?;
    std::fs::create_dir_all(out).map_err(|e| crate::Error::io(out, e))?;
    let per_scene = cams.len();
    let scenes = cfg.n.div_ceil(per_scene);
    let jobs: Vec<(usize, usize)> = (0..scenes).map(|i| (i, per_scene.min(cfg.n - i * per_scene))).collect();
    let outputs = par_map(&jobs, |&(i, views)| generate_scene(cfg, &lib, &cams, i, views, out))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::with_capacity(cfg.n);
    let mut audit_failures = Vec::new();
    for o in outputs {
        records.extend(o.records);
        audit_failures.extend(o.failures);
    }
    write_dataset(&out.join(MANIFEST_NAME), &records)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(GenerateSummary {
        records: records.len(),
        scenes,
        audit_failures,
        seconds,
        records_per_second: records.len() as f64 / seconds.max(1e-9),
    })
}
