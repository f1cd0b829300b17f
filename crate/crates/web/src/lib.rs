//! Browser bindings: simulate and label a scene, and register a partial view.

use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use autolabel::annotate::{project_bboxes, Annotation};
use autolabel::geom::{random_rotation, rotation_error_deg, translation_error_m, Camera, Intrinsics, Pose6D, Vec3};
use autolabel::models::ModelLibrary;
use autolabel::physim::{simulate_scene, PhysicsParams, SurfaceSpec};
use autolabel::register::{grid_filter, register_segment, ModelTarget, RegisterParams};
use autolabel::render::{rasterize, LightConfig};
use autolabel::rng;

const WIDTH: u32 = 320;
const HEIGHT: u32 = 240;
const VIEWS: usize = 5;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// One rendered view with its labels.
#[wasm_bindgen]
pub struct LabeledView {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
    labels: String,
}

#[wasm_bindgen]
impl LabeledView {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Pixels for `ImageData`, row-major RGBA.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// JSON array of annotations: object id, box, visible fraction.
    pub fn labels(&self) -> String {
        self.labels.clone()
    }
}

fn camera(view: usize) -> Result<Camera, JsError> {
    let rig = Camera::quarter_sphere(Intrinsics::centered(WIDTH, HEIGHT, 262.5), Vec3::zeros(), Vec3::z(), 0.8, VIEWS).map_err(js)?;
    Ok(rig[view % VIEWS])
}

/// Drop objects onto the table with `seed`, render view `view` (0 to 4) and label it.
#[wasm_bindgen]
pub fn label_scene(seed: u64, view: usize) -> Result<LabeledView, JsError> {
    let lib = ModelLibrary::builtin();
    let (scene, _) = simulate_scene(&lib, &SurfaceSpec::default(), &PhysicsParams::default(), (3, 6), seed).map_err(js)?;
    let cam = camera(view)?;
    let img = rasterize(&scene, &lib, &cam, &LightConfig::default()).map_err(js)?;
    let labels: Vec<Annotation> = project_bboxes(&scene, &lib, &cam, &img.instance, 0.0).map_err(js)?;
    let rgba = img.rgb.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect();
    Ok(LabeledView {
        width: img.width,
        height: img.height,
        rgba,
        labels: serde_json::to_string(&labels).map_err(js)?,
    })
}

#[derive(Serialize)]
struct RegisterDemo {
    model: String,
    points: usize,
    truth: Pose6D,
    estimate: Pose6D,
    lcp: f64,
    residual: f64,
    rotation_error_deg: f64,
    translation_error_m: f64,
}

/// Pose a model at random, keep the surface facing a random viewpoint with
/// 2 mm noise, register it back and report the errors as JSON.
#[wasm_bindgen]
pub fn register_demo(seed: u64) -> Result<String, JsError> {
    let lib = ModelLibrary::asymmetric();
    let mut r = rng::seeded(seed);
    let ids: Vec<String> = lib.iter().map(|m| m.id().to_string()).collect();
    let model = lib.get(&ids[r.random_range(0..ids.len())]).map_err(js)?;
    let truth = Pose6D::new(random_rotation(&mut r), Vec3::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), 0.05));
    let view = random_rotation(&mut r) * Vec3::z();
    let noise = |r: &mut rng::Rng| Vec3::from_fn(|_, _| r.random_range(-0.002..0.002));
    let samples = model.mesh.sample_surface_with_normals(2048, &mut r);
    let mut seg = Vec::with_capacity(samples.len());
    for (p, n) in samples {
        if truth.transform_vector(&n).dot(&view) > 0.0 {
            seg.push(truth.transform_point(&p) + noise(&mut r));
        }
    }
    let seg = grid_filter(&seg, 0.005);
    let params = RegisterParams::default();
    let res = register_segment(&seg, &ModelTarget::new(model, &params.congruent), &params, seed).map_err(js)?;
    serde_json::to_string(&RegisterDemo {
        model: model.id().to_string(),
        points: seg.len(),
        truth,
        estimate: res.pose,
        lcp: res.lcp,
        residual: res.residual,
        rotation_error_deg: rotation_error_deg(&res.pose, &truth),
        translation_error_m: translation_error_m(&res.pose, &truth),
    })
    .map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_view_has_one_rgba_pixel_per_image_pixel() {
        let v = label_scene(3, 1).unwrap();
        assert_eq!(v.rgba().len(), (WIDTH * HEIGHT * 4) as usize);
        let labels: Vec<Annotation> = serde_json::from_str(&v.labels()).unwrap();
        assert!(labels.iter().all(|a| a.bbox.within(WIDTH, HEIGHT)));
    }

    #[test]
    fn register_demo_reports_a_small_error() {
        let v: serde_json::Value = serde_json::from_str(&register_demo(4).unwrap()).unwrap();
        assert!(v["rotation_error_deg"].as_f64().unwrap() < 5.0, "{v}");
    }
}
