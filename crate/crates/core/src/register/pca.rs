use nalgebra::{Matrix3, SymmetricEigen};

use super::index::GridIndex;
use super::rigid::centroid;
use crate::geom::{Pose6D, Vec3};
use crate::{Error, Result};

/// Principal axes (columns, decreasing variance, right-handed) and variances.
pub fn principal_axes(points: &[Vec3]) -> Result<(Vec3, Matrix3<f64>, [f64; 3])> {
    if points.len() < 3 {
        return Err(Error::IllConditioned(format!("{} points", points.len())));
    }
    let c = centroid(points);
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.map(|i| eig.eigenvalues[i].max(0.0));
    if vals[1] <= 1e-9 * vals[0].max(f64::MIN_POSITIVE) {
        return Err(Error::IllConditioned("covariance has rank < 2".into()));
    }
    let e0: Vec3 = eig.eigenvectors.column(order[0]).into();
    let e1: Vec3 = eig.eigenvectors.column(order[1]).into();
    let axes = Matrix3::from_columns(&[e0, e1, e0.cross(&e1)]);
    Ok((c, axes, vals))
}

/// The four right-handed alignments of the model's principal frame onto the
/// segment's, as model-to-world poses.
pub fn pca_hypotheses(segment: &[Vec3], model_points: &[Vec3]) -> Result<Vec<Pose6D>> {
    let (cs, es, _) = principal_axes(segment)?;
    let (cm, em, _) = principal_axes(model_points)?;
    Ok([(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .into_iter()
        .map(|(s0, s1)| {
            let flip = Matrix3::from_diagonal(&Vec3::new(s0, s1, s0 * s1));
            let r = es * flip * em.transpose();
            Pose6D::from_matrix(&r, cs - r * cm)
        })
        .collect())
}

/// Distance cap of [`nn_rms`], meters.
pub const NN_RMS_CAP: f64 = 0.05;

/// Root mean square distance from each segment point to its nearest model point
/// under `pose` (model-to-world), each distance capped at [`NN_RMS_CAP`].
pub fn nn_rms(segment: &[Vec3], model: &GridIndex, pose: &Pose6D) -> f64 {
    let inv = pose.inverse();
    let sum: f64 = segment
        .iter()
        .map(|s| {
            let q = inv.transform_point(s);
            let d = model.nearest_within(&q, NN_RMS_CAP).map_or(NN_RMS_CAP, |x| x.1);
            d * d
        })
        .sum();
    (sum / segment.len().max(1) as f64).sqrt()
}

/// Align principal axes and centroids; keep the sign assignment with the lowest
/// nearest-neighbour RMS.
pub fn pca_align(segment: &[Vec3], model: &GridIndex) -> Result<Pose6D> {
    let hyps = pca_hypotheses(segment, model.points())?;
    Ok(hyps
        .into_iter()
        .map(|p| (nn_rms(segment, model, &p), p))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|x| x.1)
        .expect("four hypotheses"))
}
