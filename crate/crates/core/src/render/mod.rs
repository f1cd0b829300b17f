//! Software rendering of scenes into RGB, depth and instance images.
//!
//! Pixels are shaded with a Lambertian model:
//! `albedo · (ambient + Σ intensity · color · max(0, n·l) / max(d, 0.1)²)`, clamped
//! to `[0, 1]`. There are no shadows. Depth is the camera-frame z of the nearest
//! surface (0 where nothing was hit); instance `k > 0` is the `k`-th placement of
//! the scene, and 0 is the background including the resting surface.

pub mod imageio;
mod raster;

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{Camera, Vec3};
use crate::{Error, Result};

pub use raster::{object_mask, rasterize, scene_triangles, Triangle};

/// Albedo of the resting surface and container walls.
pub const SURFACE_ALBEDO: [f64; 3] = [0.55, 0.52, 0.48];
/// Distance below which the inverse-square falloff is clamped, meters.
pub const MIN_LIGHT_DISTANCE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointLight {
    pub position: [f64; 3],
    pub color: [f64; 3],
    pub intensity: f64,
}

/// Ambient (environment) light plus any number of point lights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightConfig {
    pub ambient: f64,
    #[serde(default)]
    pub point_lights: Vec<PointLight>,
}

impl Default for LightConfig {
    fn default() -> Self {
        LightConfig {
            ambient: 0.35,
            point_lights: vec![PointLight {
                position: [0.3, -0.4, 1.2],
                color: [1.0, 1.0, 1.0],
                intensity: 0.8,
            }],
        }
    }
}

impl LightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(Error::invalid("light", "ambient must lie in [0, 1]"));
        }
        if self.ambient == 0.0 && self.point_lights.is_empty() {
            return Err(Error::invalid("light", "at least one light source is required"));
        }
        for l in &self.point_lights {
            let finite = l.position.iter().all(|v| v.is_finite()) && l.intensity.is_finite();
            if !finite || l.intensity < 0.0 || l.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::invalid("light", format!("bad point light {l:?}")));
            }
        }
        Ok(())
    }

    /// Shaded color of a surface point with albedo `albedo` and unit normal `n`.
    pub fn shade(&self, albedo: [f64; 3], p: &Vec3, n: &Vec3) -> [f64; 3] {
        let mut e = [self.ambient; 3];
        for l in &self.point_lights {
            let to = Vec3::from(l.position) - p;
            let d = to.norm();
            if d == 0.0 {
                continue;
            }
            let cos = n.dot(&(to / d)).max(0.0);
            let k = l.intensity * cos / d.max(MIN_LIGHT_DISTANCE).powi(2);
            for c in 0..3 {
                e[c] += k * l.color[c];
            }
        }
        [0, 1, 2].map(|c| (albedo[c] * e[c]).clamp(0.0, 1.0))
    }
}

/// Sampling box for [`pick_lighting`]; each pair is an inclusive `[lo, hi]` range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LightingRanges {
    pub ambient: [f64; 2],
    pub count: [usize; 2],
    pub position_min: [f64; 3],
    pub position_max: [f64; 3],
    pub intensity: [f64; 2],
    pub color_min: [f64; 3],
    pub color_max: [f64; 3],
}

impl Default for LightingRanges {
    fn default() -> Self {
        LightingRanges {
            ambient: [0.25, 0.5],
            count: [1, 3],
            position_min: [-1.0, -1.0, 0.8],
            position_max: [1.0, 1.0, 1.6],
            intensity: [0.3, 1.0],
            color_min: [0.75, 0.75, 0.75],
            color_max: [1.0, 1.0, 1.0],
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Sample a light configuration uniformly within `ranges`.
pub fn pick_lighting<R: Rng + ?Sized>(rng: &mut R, ranges: &LightingRanges) -> Result<LightConfig> {
    let bad = |what: &str| Error::invalid("lighting ranges", format!("empty {what} range"));
    let ordered = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi;
    if !ordered(ranges.ambient[0], ranges.ambient[1]) || ranges.ambient[0] < 0.0 || ranges.ambient[1] > 1.0 {
        return Err(bad("ambient"));
    }
    if ranges.count[0] > ranges.count[1] {
        return Err(bad("count"));
    }
    if !ordered(ranges.intensity[0], ranges.intensity[1]) || ranges.intensity[0] < 0.0 {
        return Err(bad("intensity"));
    }
    for k in 0..3 {
        if !ordered(ranges.position_min[k], ranges.position_max[k]) {
            return Err(bad("position"));
        }
        if !ordered(ranges.color_min[k], ranges.color_max[k]) || ranges.color_min[k] < 0.0 || ranges.color_max[k] > 1.0 {
            return Err(bad("color"));
        }
    }
    let ambient = uniform(rng, ranges.ambient[0], ranges.ambient[1]);
    let n = rng.random_range(ranges.count[0]..=ranges.count[1]);
    let point_lights = (0..n)
        .map(|_| PointLight {
            position: [0, 1, 2].map(|k| uniform(rng, ranges.position_min[k], ranges.position_max[k])),
            color: [0, 1, 2].map(|k| uniform(rng, ranges.color_min[k], ranges.color_max[k])),
            intensity: uniform(rng, ranges.intensity[0], ranges.intensity[1]),
        })
        .collect();
    let light = LightConfig { ambient, point_lights };
    light.validate()?;
    Ok(light)
}

/// Row-major images of one rendered view.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
    pub depth: Vec<f32>,
    pub instance: Vec<u16>,
    pub camera: Camera,
    pub light: LightConfig,
}

/// File locations of a written view, relative to the dataset root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewPaths {
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub instance: PathBuf,
}

impl ViewPaths {
    pub fn new(scene_id: &str, view_id: &str) -> Self {
        let stem = format!("{scene_id}_{view_id}");
        ViewPaths {
            rgb: PathBuf::from(format!("{stem}.ppm")),
            depth: PathBuf::from(format!("{stem}.pfm")),
            instance: PathBuf::from(format!("{stem}.pgm")),
        }
    }
}

impl RenderedView {
    fn idx(&self, u: u32, v: u32) -> usize {
        (v * self.width + u) as usize
    }

    pub fn depth_at(&self, u: u32, v: u32) -> f32 {
        self.depth[self.idx(u, v)]
    }

    pub fn instance_at(&self, u: u32, v: u32) -> u16 {
        self.instance[self.idx(u, v)]
    }

    pub fn rgb_at(&self, u: u32, v: u32) -> [u8; 3] {
        let i = self.idx(u, v) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Write the three images under `root` and return their relative paths.
    pub fn write(&self, root: &Path, scene_id: &str, view_id: &str) -> Result<ViewPaths> {
        let paths = ViewPaths::new(scene_id, view_id);
        imageio::write_ppm(&root.join(&paths.rgb), self.width, self.height, &self.rgb)?;
        imageio::write_pfm(&root.join(&paths.depth), self.width, self.height, &self.depth)?;
        imageio::write_pgm(&root.join(&paths.instance), self.width, self.height, &self.instance)?;
        Ok(paths)
    }
}
