use super::index::GridIndex;
use crate::geom::{Pose6D, Vec3};

/// Fraction of model points, posed into the world, with a segment point within
/// `epsilon`.
pub fn lcp_score(model_points: &[Vec3], segment: &[Vec3], pose: &Pose6D, epsilon: f64) -> f64 {
    assert!(epsilon > 0.0, "epsilon must be positive");
    lcp_with_index(model_points, &GridIndex::new(segment, epsilon), pose, epsilon)
}

/// [`lcp_score`] against a prebuilt segment index.
pub fn lcp_with_index(model_points: &[Vec3], segment: &GridIndex, pose: &Pose6D, epsilon: f64) -> f64 {
    if model_points.is_empty() || segment.is_empty() {
        return 0.0;
    }
    let hits = model_points
        .iter()
        .filter(|p| segment.has_neighbor_within(&pose.transform_point(p), epsilon))
        .count();
    hits as f64 / model_points.len() as f64
}
