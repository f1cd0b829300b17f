//! Physics-aware synthetic dataset generation and multi-view self-labeling.
//!
//! The crate is organised along the data flow of the pipeline:
//!
//! * [`geom`]: poses, pinhole cameras, boxes, meshes and the shared error metrics.
//! * [`models`]: the loaded object library (meshes, collision hulls, surface samples).
//! * [`physim`]: random scene construction and rigid-body settling on a resting surface.
//! * [`render`]: z-buffered software rasterization into RGB, depth and instance images.
//! * [`annotate`]: occlusion-aware 2D labels and the JSON-lines dataset manifest.
//! * [`detect`]: the detector boundary, an oracle, a noisy mock and file exchange.
//! * [`register`]: point-cloud cleanup, PCA/ICP and 4-point congruent-set registration.
//! * [`selflearn`]: the multi-view pose estimation and relabeling loop.
//! * [`distmatch`]: pose-distribution matched scene subsampling.
//! * [`harness`]: configuration, dataset generation, evaluation and the CLI plumbing.

pub mod annotate;
pub mod detect;
pub mod distmatch;
mod error;
mod exec;
pub mod geom;
pub mod harness;
pub mod models;
pub mod physim;
pub mod register;
pub mod render;
pub mod rng;
pub mod selflearn;

pub use error::{Error, Result};
