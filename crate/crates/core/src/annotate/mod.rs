//! 2D labels from posed scenes: tight boxes of each object's visible pixels in the
//! instance map, plus the analytic projected-vertex box used for validation and
//! reprojection.

mod dataset;

use serde::{Deserialize, Serialize};

use crate::geom::{BBox2D, Camera, Pose6D, TriMesh, Vec3};
use crate::models::ModelLibrary;
use crate::physim::Scene;
use crate::render::object_mask;
use crate::{Error, Result};

pub use dataset::{read_dataset, write_dataset, DatasetRecord, ManifestWriter, ObjectPose, Provenance};

/// Objects whose visible fraction falls below this are not labeled.
pub const DEFAULT_MIN_VISIBILITY: f64 = 0.05;

const NEAR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Synthetic,
    SelfLabeled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub object_id: String,
    pub bbox: BBox2D,
    pub visible_fraction: f64,
    pub source: LabelSource,
}

/// Tight box of the pixels equal to `value` in a row-major `width`-wide map.
pub fn mask_bbox(map: &[u16], width: u32, value: u16) -> Option<(BBox2D, usize)> {
    let w = width as usize;
    let (mut x0, mut y0, mut x1, mut y1, mut n) = (usize::MAX, usize::MAX, 0, 0, 0);
    for (idx, &v) in map.iter().enumerate() {
        if v == value {
            let (x, y) = (idx % w, idx / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            n += 1;
        }
    }
    (n > 0).then(|| {
        (
            BBox2D {
                x_min: x0 as i32,
                y_min: y0 as i32,
                x_max: x1 as i32 + 1,
                y_max: y1 as i32 + 1,
            },
            n,
        )
    })
}

/// Label every placement from the instance map rendered with `cam`.
///
/// The visible fraction is the ratio of visible pixels to the pixels the object
/// covers when rendered alone; objects below `min_visibility` are dropped.
pub fn project_bboxes(
    scene: &Scene,
    library: &ModelLibrary,
    cam: &Camera,
    instance: &[u16],
    min_visibility: f64,
) -> Result<Vec<Annotation>> {
    let (w, h) = (cam.width(), cam.height());
    if instance.len() != (w * h) as usize {
        return Err(Error::invalid("instance map", "size does not match the camera"));
    }
    let mut out = Vec::new();
    for (k, p) in scene.placements.iter().enumerate() {
        let Some((bbox, visible)) = mask_bbox(instance, w, (k + 1) as u16) else {
            continue;
        };
        let mesh = &library.get(&p.object_id)?.mesh;
        let full = object_mask(mesh, &p.pose, cam).iter().filter(|&&b| b).count();
        if full == 0 {
            continue;
        }
        let visible_fraction = (visible as f64 / full as f64).min(1.0);
        if visible_fraction < min_visibility {
            continue;
        }
        out.push(Annotation {
            object_id: p.object_id.clone(),
            bbox,
            visible_fraction,
            source: LabelSource::Synthetic,
        });
    }
    Ok(out)
}

/// Keep the part of `poly` where `inside` holds (one Sutherland-Hodgman pass).
fn clip_polygon<P: Copy>(poly: &[P], inside: impl Fn(&P) -> f64, lerp: impl Fn(&P, &P, f64) -> P) -> Vec<P> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for (i, a) in poly.iter().enumerate() {
        let b = &poly[(i + 1) % poly.len()];
        let (da, db) = (inside(a), inside(b));
        if da >= 0.0 {
            out.push(*a);
        }
        if (da >= 0.0) != (db >= 0.0) {
            out.push(lerp(a, b, da / (da - db)));
        }
    }
    out
}

/// Bounding box of the part of the projected mesh that lands in the image.
///
/// Each triangle is clipped against a near plane and then, after projection,
/// against the image rectangle, so objects cut by the frame or straddling the
/// camera plane get the box of their in-frame silhouette. Pixel `i` is in the
/// box when its centre lies in the projected extent. `Ok(None)` means the
/// projection misses the image.
pub fn analytic_bbox(mesh: &TriMesh, pose: &Pose6D, cam: &Camera) -> Result<Option<BBox2D>> {
    let c: Vec<Vec3> = mesh.vertices.iter().map(|v| cam.world_to_camera(&pose.transform_point(v))).collect();
    let zmax = c.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    if zmax <= NEAR {
        return Err(Error::BehindCamera { z: zmax });
    }
    let k = &cam.intrinsics;
    // Pixel centres sit on integer coordinates, so the image spans half a pixel beyond them.
    let (w, h) = (cam.width() as f64 - 0.5, cam.height() as f64 - 0.5);
    let lerp3 = |a: &Vec3, b: &Vec3, t: f64| a + (b - a) * t;
    let lerp2 = |a: &[f64; 2], b: &[f64; 2], t: f64| [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t];
    let (mut umin, mut vmin, mut umax, mut vmax) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for t in &mesh.triangles {
        let tri = [c[t[0] as usize], c[t[1] as usize], c[t[2] as usize]];
        let front = clip_polygon(&tri, |p| p.z - NEAR, lerp3);
        let mut poly: Vec<[f64; 2]> = front.iter().map(|p| [k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy]).collect();
        for axis in 0..2 {
            let hi = if axis == 0 { w } else { h };
            poly = clip_polygon(&poly, |p| p[axis] + 0.5, lerp2);
            poly = clip_polygon(&poly, |p| hi - p[axis], lerp2);
        }
        for p in &poly {
            umin = umin.min(p[0]);
            umax = umax.max(p[0]);
            vmin = vmin.min(p[1]);
            vmax = vmax.max(p[1]);
        }
    }
    if umin > umax {
        return Ok(None);
    }
    let raw = BBox2D {
        x_min: umin.ceil() as i32,
        y_min: vmin.ceil() as i32,
        x_max: umax.floor() as i32 + 1,
        y_max: vmax.floor() as i32 + 1,
    };
    if raw.x_max <= raw.x_min || raw.y_max <= raw.y_min {
        return Ok(None);
    }
    Ok(raw.clip(cam.width(), cam.height()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{shapes, Intrinsics};
    use crate::physim::SurfaceSpec;
    use crate::render::{rasterize, LightConfig};

    fn front_camera() -> Camera {
        // Looking down -z from 1 m with image x along world x.
        Camera::look_at(Intrinsics::centered(640, 480, 500.0), Vec3::new(0.0, 0.0, 1.0), Vec3::zeros(), Vec3::y()).unwrap()
    }

    fn no_surface() -> SurfaceSpec {
        SurfaceSpec {
            pose: Pose6D::from_translation(Vec3::new(100.0, 0.0, -5.0)),
            dims: [0.01, 0.01],
            ..SurfaceSpec::default()
        }
    }

    #[test]
    fn face_on_cube_side_matches_similar_triangles() {
        let cube = shapes::cuboid("c", [0.1; 3]);
        let cam = front_camera();
        let b = analytic_bbox(&cube, &Pose6D::identity(), &cam).unwrap().unwrap();
        // Nearest face at z = 0.95: fx · edge / z pixels.
        let side = 500.0 * 0.1 / 0.95;
        assert!((b.width() as f64 - side).abs() <= 1.0, "{}", b.width());
        assert!((b.height() as f64 - side).abs() <= 1.0);
    }

    #[test]
    fn parallel_shift_moves_box() {
        let cube = shapes::cuboid("c", [0.1; 3]);
        let cam = front_camera();
        let a = analytic_bbox(&cube, &Pose6D::identity(), &cam).unwrap().unwrap();
        let b = analytic_bbox(&cube, &Pose6D::from_translation(Vec3::new(0.05, 0.0, 0.0)), &cam)
            .unwrap()
            .unwrap();
        // The nearest face dominates the silhouette: 500 · 0.05 / 0.95 px.
        let shift = (b.x_min - a.x_min) as f64;
        assert!((shift - 500.0 * 0.05 / 0.95).abs() <= 1.0, "{shift}");
    }

    #[test]
    fn edge_and_behind_cases() {
        let cube = shapes::cuboid("c", [0.1; 3]);
        let cam = front_camera();
        let at_edge = Pose6D::from_translation(Vec3::new(0.62, 0.0, 0.0));
        let b = analytic_bbox(&cube, &at_edge, &cam).unwrap().unwrap();
        assert!(b.within(640, 480) && b.area() > 0);
        let outside = Pose6D::from_translation(Vec3::new(5.0, 0.0, 0.0));
        assert_eq!(analytic_bbox(&cube, &outside, &cam).unwrap(), None);
        let behind = Pose6D::from_translation(Vec3::new(0.0, 0.0, 3.0));
        assert!(matches!(analytic_bbox(&cube, &behind, &cam), Err(Error::BehindCamera { .. })));
        // Straddling the camera plane still projects.
        let straddle = Pose6D::from_translation(Vec3::new(0.0, 0.2, 1.0));
        assert!(analytic_bbox(&cube, &straddle, &cam).is_ok());
    }

    #[test]
    fn unoccluded_mask_box_matches_analytic_box() {
        let lib = ModelLibrary::builtin();
        let cam = front_camera();
        for (i, id) in lib.ids().iter().enumerate() {
            let pose = Pose6D::from_axis_angle(Vec3::new(1.0, 0.3 * i as f64, 0.2), 0.7 + i as f64, Vec3::zeros());
            let scene = Scene::new("s", no_surface(), vec![(id.clone(), pose)], 0);
            let view = rasterize(&scene, &lib, &cam, &LightConfig::default()).unwrap();
            let ann = project_bboxes(&scene, &lib, &cam, &view.instance, DEFAULT_MIN_VISIBILITY).unwrap();
            assert_eq!(ann.len(), 1);
            assert!((ann[0].visible_fraction - 1.0).abs() < 1e-12);
            let oracle = analytic_bbox(&lib.get(id).unwrap().mesh, &pose, &cam).unwrap().unwrap();
            assert!(ann[0].bbox.max_edge_delta(&oracle) <= 1, "{id}: {:?} vs {oracle:?}", ann[0].bbox);
        }
    }

    #[test]
    fn frame_cut_box_follows_the_in_frame_silhouette() {
        let lib = ModelLibrary::builtin();
        let cam = front_camera();
        // Image corner at 1 m depth: (cx / fx, cy / fy).
        for (i, id) in lib.ids().iter().enumerate() {
            let pose = Pose6D::from_axis_angle(Vec3::new(0.4, 1.0, 0.3 * i as f64), 0.9 + i as f64, Vec3::new(0.64, 0.48, 0.0));
            let scene = Scene::new("s", no_surface(), vec![(id.clone(), pose)], 0);
            let view = rasterize(&scene, &lib, &cam, &LightConfig::default()).unwrap();
            let (mask, _) = mask_bbox(&view.instance, cam.width(), 1).unwrap();
            let oracle = analytic_bbox(&lib.get(id).unwrap().mesh, &pose, &cam).unwrap().unwrap();
            assert!(mask.max_edge_delta(&oracle) <= 1, "{id}: {mask:?} vs {oracle:?}");
        }
    }

    #[test]
    fn occlusion_is_exact() {
        let lib = ModelLibrary::from_meshes(
            vec![shapes::cuboid("front", [0.1, 0.2, 0.02]), shapes::cuboid("back", [0.1, 0.1, 0.02])],
            16,
        )
        .unwrap();
        let cam = front_camera();
        // "front" covers the left half of "back" (x in [-0.05, 0]).
        let scene = Scene::new(
            "s",
            no_surface(),
            vec![
                ("front".into(), Pose6D::from_translation(Vec3::new(-0.05, 0.0, 0.1))),
                ("back".into(), Pose6D::from_translation(Vec3::new(0.0, 0.0, 0.0))),
            ],
            0,
        );
        let view = rasterize(&scene, &lib, &cam, &LightConfig::default()).unwrap();
        let ann = project_bboxes(&scene, &lib, &cam, &view.instance, DEFAULT_MIN_VISIBILITY).unwrap();
        let back = ann.iter().find(|a| a.object_id == "back").unwrap();
        assert!((back.visible_fraction - 0.5).abs() < 0.05, "{}", back.visible_fraction);
        let full = analytic_bbox(&lib.get("back").unwrap().mesh, &scene.placements[1].pose, &cam)
            .unwrap()
            .unwrap();
        assert!(full.contains_box(&back.bbox));

        // Fully hidden: no annotation.
        let hidden = Scene::new(
            "s",
            no_surface(),
            vec![
                ("front".into(), Pose6D::from_translation(Vec3::new(0.0, 0.0, 0.1))),
                ("back".into(), Pose6D::from_translation(Vec3::new(0.0, 0.0, 0.0))),
            ],
            0,
        );
        let view = rasterize(&hidden, &lib, &cam, &LightConfig::default()).unwrap();
        let ann = project_bboxes(&hidden, &lib, &cam, &view.instance, DEFAULT_MIN_VISIBILITY).unwrap();
        assert_eq!(ann.len(), 1);
        assert_eq!(ann[0].object_id, "front");
    }

    #[test]
    fn mask_bbox_is_half_open() {
        let map = [0, 0, 0, 0, 3, 3, 0, 0, 3];
        let (b, n) = mask_bbox(&map, 3, 3).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max, n), (1, 1, 3, 3, 3));
        assert!(mask_bbox(&map, 3, 7).is_none());
    }
}
