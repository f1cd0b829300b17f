//! Pose algebra, pinhole cameras, boxes, meshes and the error metrics shared by
//! every other module.
//!
//! Conventions: quaternions are `(w, x, y, z)`; the camera looks along its +z axis
//! with +x to the right and +y down the image; pixel `(i, j)` is centred on image
//! coordinates `(i, j)`, so the principal point addresses a pixel directly.

mod bbox;
mod camera;
mod mesh;
pub mod meshio;
mod pose;
pub mod shapes;

pub use bbox::{bbox_iou, BBox2D};
pub use camera::{Camera, Intrinsics};
pub use mesh::TriMesh;
pub use pose::{compose, random_rotation, rotation_error_deg, translation_error_m, Pose6D};

pub type Vec3 = nalgebra::Vector3<f64>;
