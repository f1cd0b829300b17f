use nalgebra::{Matrix3, SVD};

use crate::geom::{Pose6D, Vec3};
use crate::{Error, Result};

pub fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::zeros(), |a, p| a + p) / points.len().max(1) as f64
}

/// Least-squares rigid transform taking `src[i]` onto `dst[i]` (Kabsch with
/// reflection correction).
pub fn kabsch(src: &[Vec3], dst: &[Vec3]) -> Result<Pose6D> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::Degenerate(format!("kabsch needs >= 3 pairs, got {}", src.len().min(dst.len()))));
    }
    let (cs, cd) = (centroid(src), centroid(dst));
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = SVD::new(h, true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (vt.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = vt.transpose() * d * u.transpose();
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("kabsch produced a non-finite rotation".into()));
    }
    Ok(Pose6D::from_matrix(&r, cd - r * cs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{random_rotation, rotation_error_deg, translation_error_m};
    use crate::rng;
    use rand::Rng;

    #[test]
    fn recovers_a_known_transform() {
        let mut r = rng::seeded(5);
        for _ in 0..50 {
            let truth = Pose6D::new(random_rotation(&mut r), Vec3::new(r.random(), r.random(), r.random()));
            let src: Vec<Vec3> = (0..10).map(|_| Vec3::new(r.random(), r.random(), r.random())).collect();
            let dst: Vec<Vec3> = src.iter().map(|p| truth.transform_point(p)).collect();
            let est = kabsch(&src, &dst).unwrap();
            assert!(rotation_error_deg(&est, &truth) < 1e-6);
            assert!(translation_error_m(&est, &truth) < 1e-9);
        }
    }

    #[test]
    fn never_returns_a_reflection() {
        let src = [Vec3::x(), Vec3::y(), Vec3::z(), Vec3::zeros()];
        let dst = src.map(|p| Vec3::new(-p.x, p.y, p.z));
        let est = kabsch(&src, &dst).unwrap();
        assert!((est.rotation_matrix().determinant() - 1.0).abs() < 1e-9);
    }
}
