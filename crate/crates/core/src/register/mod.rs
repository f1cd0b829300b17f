//! Segment cleanup and model-to-segment rigid registration.
//!
//! Poses are model-to-world throughout: `pose.transform_point(model_point)`
//! lands on the segment.

mod cloud;
mod congruent;
mod icp;
mod index;
mod lcp;
mod pca;
mod plane;
mod rigid;

use serde::{Deserialize, Serialize};

pub use cloud::{backproject, clean_cloud, crop, grid_filter, largest_cluster, remove_outliers, CleanParams};
pub use congruent::{base_ratios, congruent_hypotheses, congruent_search, CongruentModel, CongruentParams, Hypotheses};
pub use icp::{icp, IcpParams};
pub use index::GridIndex;
pub use lcp::{lcp_score, lcp_with_index};
pub use pca::{nn_rms, pca_align, pca_hypotheses, principal_axes};
pub use plane::{ransac_plane, Plane, PlaneFit, RansacParams};
pub use rigid::{centroid, kabsch};

use crate::geom::{meshio, Pose6D, Vec3};
use crate::models::Model;
use crate::{Error, Result};

/// Cell size of the model sample index, meters.
pub const MODEL_INDEX_CELL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Camera,
    World,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, frame: Frame) -> Self {
        PointCloud { points, frame }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Apply `pose` and retag the result as `frame`.
    pub fn transformed(&self, pose: &Pose6D, frame: Frame) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            frame,
        }
    }

    pub fn extend(&mut self, other: &PointCloud) -> Result<()> {
        if other.frame != self.frame {
            return Err(Error::invalid("point cloud", "cannot merge clouds in different frames"));
        }
        self.points.extend_from_slice(&other.points);
        Ok(())
    }

    /// ASCII PLY dump for debugging.
    pub fn to_ply(&self) -> String {
        meshio::points_to_ply(&self.points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Model-to-world.
    pub pose: Pose6D,
    pub lcp: f64,
    /// Root mean square of the truncated nearest-neighbour distances, meters.
    pub residual: f64,
    pub iterations: usize,
    /// Residual after each accepted ICP iteration, starting with the initial pose.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
    #[serde(default)]
    pub timed_out: bool,
}

impl RegistrationResult {
    pub fn residuals_monotone(&self) -> bool {
        self.history.windows(2).all(|w| w[1] <= w[0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Congruent,
    PcaIcp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegisterParams {
    pub method: Method,
    pub clean: CleanParams,
    pub congruent: CongruentParams,
    pub icp: IcpParams,
    pub lcp_epsilon: f64,
    /// Estimates with a lower LCP are rejected.
    pub min_lcp: f64,
    /// Segments with fewer points after cleaning are skipped.
    pub min_points: usize,
}

impl Default for RegisterParams {
    fn default() -> Self {
        RegisterParams {
            method: Method::Congruent,
            clean: CleanParams::default(),
            congruent: CongruentParams::default(),
            icp: IcpParams::default(),
            lcp_epsilon: 0.01,
            min_lcp: 0.5,
            min_points: 30,
        }
    }
}

impl RegisterParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::invalid("register params", r));
        if !(self.lcp_epsilon > 0.0) {
            return bad("lcp_epsilon must be positive");
        }
        if !(0.0..=1.0).contains(&self.min_lcp) {
            return bad("min_lcp must lie in [0, 1]");
        }
        if self.min_points < 4 {
            return bad("min_points must be at least 4");
        }
        self.congruent.validate()?;
        self.icp.validate()
    }
}

/// Model samples prepared for registration.
#[derive(Clone, Debug)]
pub struct ModelTarget {
    pub index: GridIndex,
    pub congruent: CongruentModel,
}

impl ModelTarget {
    pub fn new(model: &Model, params: &CongruentParams) -> Self {
        ModelTarget {
            index: GridIndex::new(&model.samples, MODEL_INDEX_CELL),
            congruent: CongruentModel::new(&model.samples, params),
        }
    }

    pub fn points(&self) -> &[Vec3] {
        self.index.points()
    }
}

/// Register a cleaned world-frame segment: global hypotheses (congruent search,
/// or PCA) each refined by ICP, keeping the lowest refined residual, scored by
/// LCP. Falls back to the other global method when the chosen one cannot
/// produce an estimate.
pub fn register_segment(segment: &[Vec3], target: &ModelTarget, params: &RegisterParams, seed: u64) -> Result<RegistrationResult> {
    if segment.len() < params.min_points {
        return Err(Error::SegmentTooSmall { points: segment.len() });
    }
    let congruent = || congruent_hypotheses(segment, &target.congruent, &target.index, &params.congruent, seed);
    let pca = || pca_align(segment, &target.index).map(|p| (vec![p], false));
    let (inits, timed_out) = match params.method {
        Method::Congruent => match congruent() {
            Err(Error::NoValidBase) => pca()?,
            r => r.map(|h| (h.poses, h.timed_out))?,
        },
        Method::PcaIcp => match pca() {
            Err(Error::IllConditioned(_)) => congruent().map(|h| (h.poses, h.timed_out))?,
            r => r?,
        },
    };
    let mut best: Option<RegistrationResult> = None;
    let mut last_err = None;
    for init in &inits {
        match icp(segment, &target.index, init, &params.icp) {
            Ok(r) => {
                if best.as_ref().map_or(true, |b| r.residual < b.residual) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let mut res = match (best, last_err) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e),
        (None, None) => return Err(Error::NoValidBase),
    };
    res.lcp = lcp_score(target.points(), segment, &res.pose, params.lcp_epsilon);
    res.timed_out = timed_out;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_retags_frame() {
        let c = PointCloud::new(vec![Vec3::new(1.0, 0.0, 0.0)], Frame::Camera);
        let w = c.transformed(&Pose6D::from_translation(Vec3::new(0.0, 0.0, 2.0)), Frame::World);
        assert_eq!(w.frame, Frame::World);
        assert_eq!(w.points[0], Vec3::new(1.0, 0.0, 2.0));
        let mut c2 = c.clone();
        assert!(c2.extend(&w).is_err());
        assert!(c2.extend(&c).is_ok());
        assert_eq!(c2.len(), 2);
    }

    #[test]
    fn params_round_trip() {
        let p = RegisterParams::default();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<RegisterParams>(&s).unwrap(), p);
        p.validate().unwrap();
    }
}
