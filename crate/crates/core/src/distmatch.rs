//! Scene subsampling weighted towards a target pose distribution: scenes whose
//! object poses resemble the target poses are drawn more often.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::ObjectPose;
use crate::geom::{rotation_error_deg, translation_error_m, Pose6D};
use crate::physim::Scene;
use crate::{Error, Result};

/// Relative slack below which an error counts as sitting on a limit, so poses
/// built exactly at a limit fail despite rounding in the error computation.
const LIMIT_SLACK: f64 = 1e-9;

/// Two poses match when both errors are strictly below the limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseMatchCriterion {
    pub max_rotation_deg: f64,
    pub max_translation_m: f64,
}

impl Default for PoseMatchCriterion {
    fn default() -> Self {
        PoseMatchCriterion {
            max_rotation_deg: 15.0,
            max_translation_m: 0.05,
        }
    }
}

impl PoseMatchCriterion {
    pub fn validate(&self) -> Result<()> {
        if self.max_rotation_deg > 0.0 && self.max_translation_m > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("pose match criterion", "both limits must be positive"))
        }
    }

    pub fn matches(&self, a: &Pose6D, b: &Pose6D) -> bool {
        self.within(rotation_error_deg(a, b), translation_error_m(a, b))
    }

    /// Whether measured errors are strictly below the limits.
    pub fn within(&self, rotation_deg: f64, translation_m: f64) -> bool {
        rotation_deg < self.max_rotation_deg * (1.0 - LIMIT_SLACK) && translation_m < self.max_translation_m * (1.0 - LIMIT_SLACK)
    }
}

/// Target poses per object id.
pub type TargetPoses = BTreeMap<String, Vec<Pose6D>>;

/// Number of scene objects whose pose matches at least one target pose of the
/// same object. Objects without target poses never match.
pub fn scene_match_weight(scene: &Scene, targets: &TargetPoses, crit: &PoseMatchCriterion) -> usize {
    scene
        .placements
        .iter()
        .filter(|p| targets.get(&p.object_id).is_some_and(|ts| ts.iter().any(|t| crit.matches(&p.pose, t))))
        .count()
}

/// `n` scene indices drawn with replacement, each with probability proportional
/// to its weight.
pub fn subsample_indices<R: Rng + ?Sized>(weights: &[usize], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let dist = WeightedIndex::new(weights.iter().map(|&w| w as f64)).map_err(|_| Error::NoMatchingScenes)?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// `n` scenes drawn with replacement, each with probability proportional to its weight.
pub fn subsample_scenes<R: Rng + ?Sized>(scenes: &[Scene], weights: &[usize], n: usize, rng: &mut R) -> Result<Vec<Scene>> {
    if scenes.len() != weights.len() {
        return Err(Error::invalid("subsample", "one weight per scene is required"));
    }
    Ok(subsample_indices(weights, n, rng)?.into_iter().map(|i| scenes[i].clone()).collect())
}

/// Group a pose list by object id.
pub fn group_poses(poses: &[ObjectPose]) -> TargetPoses {
    let mut out = TargetPoses::new();
    for p in poses {
        out.entry(p.object_id.clone()).or_default().push(p.pose);
    }
    out
}

/// Read a JSON array of `{object_id, pose}` entries.
pub fn read_target_poses(path: &Path) -> Result<TargetPoses> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let poses: Vec<ObjectPose> = serde_json::from_str(&text)?;
    let grouped = group_poses(&poses);
    if let Some((id, _)) = grouped.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::invalid("target poses", format!("no poses for `{id}`")));
    }
    Ok(grouped)
}
