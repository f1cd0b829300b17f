use serde::{Deserialize, Serialize};

use super::{Pose6D, Vec3};
use crate::{Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Intrinsics with the principal point at the image centre.
    pub fn centered(width: u32, height: u32, focal: f64) -> Self {
        Intrinsics {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && (0.0..self.width as f64).contains(&self.cx)
            && (0.0..self.height as f64).contains(&self.cy);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("intrinsics", format!("{self:?}")))
        }
    }

    /// Resample to another resolution, keeping the field of view.
    pub fn scaled(&self, width: u32, height: u32) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Intrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        }
    }
}

/// A pinhole camera: intrinsics plus a camera-to-world pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    #[serde(flatten)]
    pub intrinsics: Intrinsics,
    pub pose: Pose6D,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, pose: Pose6D) -> Self {
        Camera { intrinsics, pose }
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll (image -y points
    /// roughly along `up`).
    pub fn look_at(intrinsics: Intrinsics, eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::invalid("camera", "eye and target coincide"));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(Error::invalid("camera", "up vector is parallel to the view direction"));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = nalgebra::Matrix3::from_columns(&[x, y, z]);
        Ok(Camera::new(intrinsics, Pose6D::from_matrix(&r, eye)))
    }

    /// `count` cameras at distance `radius` from `target` spread over a quarter
    /// sphere: azimuths evenly over 180 degrees on the -y side of `up`'s
    /// horizon, elevations alternating between 35 and 65 degrees.
    pub fn quarter_sphere(intrinsics: Intrinsics, target: Vec3, up: Vec3, radius: f64, count: usize) -> Result<Vec<Self>> {
        if count == 0 || !(radius > 0.0) {
            return Err(Error::invalid("camera rig", "need a positive count and radius"));
        }
        let up = up.normalize();
        let seed = if up.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = (seed - up * up.dot(&seed)).normalize();
        let e2 = up.cross(&e1);
        (0..count)
            .map(|k| {
                let az = if count == 1 { 0.0 } else { std::f64::consts::PI * k as f64 / (count - 1) as f64 };
                let el = if k % 2 == 0 { 35f64 } else { 65f64 }.to_radians();
                let dir = (e1 * az.cos() - e2 * az.sin()) * el.cos() + up * el.sin();
                Camera::look_at(intrinsics, target + dir * radius, target, up)
            })
            .collect()
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    pub fn center(&self) -> Vec3 {
        self.pose.translation
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if !self.pose.is_finite() {
            return Err(Error::invalid("camera", "non-finite pose"));
        }
        Ok(())
    }

    pub fn world_to_camera(&self, p_world: &Vec3) -> Vec3 {
        self.pose.inverse_transform_point(p_world)
    }

    /// Project a camera-frame point; `z` must be positive.
    pub fn project_camera_point(&self, p: &Vec3) -> Result<[f64; 2]> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera { z: p.z });
        }
        let k = &self.intrinsics;
        Ok([k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy])
    }

    /// Perspective projection of a world point to pixel coordinates `(u, v)`.
    pub fn project_point(&self, p_world: &Vec3) -> Result<[f64; 2]> {
        self.project_camera_point(&self.world_to_camera(p_world))
    }

    /// Camera-frame point seen at pixel `(u, v)` with depth `z`.
    pub fn backproject_camera(&self, u: f64, v: f64, z: f64) -> Vec3 {
        let k = &self.intrinsics;
        Vec3::new((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z)
    }

    /// World point seen at pixel `(u, v)` with camera-frame depth `z`.
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        self.pose.transform_point(&self.backproject_camera(u, v, z))
    }
}
