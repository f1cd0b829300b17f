use serde::{Deserialize, Serialize};

use super::index::GridIndex;
use super::rigid::kabsch;
use super::RegistrationResult;
use crate::geom::{Pose6D, Vec3};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the residual improves by less than this, meters.
    pub tolerance: f64,
    /// Correspondence cutoff, meters.
    pub cutoff: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 50,
            tolerance: 1e-6,
            cutoff: 0.02,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0) || !(self.tolerance >= 0.0) || self.max_iterations == 0 {
            return Err(Error::invalid("icp params", "cutoff > 0, tolerance >= 0 and max_iterations >= 1 required"));
        }
        Ok(())
    }
}

struct Matches {
    model: Vec<Vec3>,
    segment: Vec<Vec3>,
    /// Mean of min(d², cutoff²) over every segment point.
    energy: f64,
}

fn correspond(segment: &[Vec3], model: &GridIndex, pose: &Pose6D, cutoff: f64) -> Matches {
    let inv = pose.inverse();
    let mut m = Matches {
        model: Vec::new(),
        segment: Vec::new(),
        energy: 0.0,
    };
    let c2 = cutoff * cutoff;
    for s in segment {
        match model.nearest_within(&inv.transform_point(s), cutoff) {
            Some((j, d)) => {
                m.model.push(model.points()[j]);
                m.segment.push(*s);
                m.energy += d * d;
            }
            None => m.energy += c2,
        }
    }
    m.energy /= segment.len() as f64;
    m
}

/// Point-to-point ICP of the model (indexed in its own frame) onto a world-frame
/// segment, starting from `init`. Minimises the mean truncated squared distance;
/// a step that would raise it is rejected, so the residual history never increases.
pub fn icp(segment: &[Vec3], model: &GridIndex, init: &Pose6D, params: &IcpParams) -> Result<RegistrationResult> {
    params.validate()?;
    if segment.is_empty() || model.is_empty() {
        return Err(Error::SegmentTooSmall { points: segment.len() });
    }
    let mut pose = *init;
    let mut cur = correspond(segment, model, &pose, params.cutoff);
    if cur.model.len() < 3 {
        return Err(Error::Diverged { cutoff: params.cutoff });
    }
    let mut history = vec![cur.energy.sqrt()];
    let mut iterations = 0;
    while iterations < params.max_iterations && cur.model.len() >= 3 {
        let Ok(next_pose) = kabsch(&cur.model, &cur.segment) else { break };
        let next = correspond(segment, model, &next_pose, params.cutoff);
        if next.energy > cur.energy {
            break;
        }
        let gain = cur.energy.sqrt() - next.energy.sqrt();
        pose = next_pose;
        cur = next;
        iterations += 1;
        history.push(cur.energy.sqrt());
        if gain < params.tolerance {
            break;
        }
    }
    debug_assert!(history.windows(2).all(|w| w[1] <= w[0]));
    Ok(RegistrationResult {
        pose,
        lcp: 0.0,
        residual: cur.energy.sqrt(),
        iterations,
        history,
        timed_out: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rotation_error_deg, translation_error_m};
    use crate::models::ModelLibrary;
    use crate::rng;
    use rand_distr::{Distribution, Normal};

    fn setup(noise: f64) -> (GridIndex, Vec<Vec3>, Pose6D) {
        let lib = ModelLibrary::asymmetric();
        let m = lib.get("lblock").unwrap();
        let truth = Pose6D::from_axis_angle(Vec3::new(1.0, 2.0, 0.5), 0.7, Vec3::new(0.05, -0.02, 0.03));
        let mut r = rng::seeded(9);
        let n = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let seg = m
            .samples
            .iter()
            .step_by(2)
            .map(|p| truth.transform_point(p) + Vec3::new(n.sample(&mut r), n.sample(&mut r), n.sample(&mut r)) * f64::from(noise > 0.0))
            .collect();
        (GridIndex::new(&m.samples, 0.01), seg, truth)
    }

    #[test]
    fn ground_truth_is_a_fixed_point() {
        let (idx, seg, truth) = setup(0.0);
        let r = icp(&seg, &idx, &truth, &IcpParams::default()).unwrap();
        assert!(translation_error_m(&r.pose, &truth) < 1e-6);
        assert!(rotation_error_deg(&r.pose, &truth) < 1e-4);
        assert!(r.residual < 1e-9);
    }

    #[test]
    fn noisy_residual_is_close_to_sigma() {
        let (idx, seg, truth) = setup(0.002);
        let r = icp(&seg, &idx, &truth, &IcpParams::default()).unwrap();
        // Nearest-neighbour distances underestimate the noise magnitude.
        assert!(r.residual > 0.0005 && r.residual < 0.0035, "{}", r.residual);
    }

    #[test]
    fn recovers_a_5mm_offset() {
        let (idx, seg, truth) = setup(0.0);
        let init = Pose6D::from_translation(Vec3::new(0.003, -0.004, 0.0)).compose(&truth);
        let r = icp(&seg, &idx, &init, &IcpParams::default()).unwrap();
        assert!(translation_error_m(&r.pose, &truth) < 1e-3, "{}", translation_error_m(&r.pose, &truth));
        assert!(r.residuals_monotone());
        assert!(r.iterations > 0);
    }

    #[test]
    fn far_initialisation_diverges() {
        let (idx, seg, truth) = setup(0.0);
        let init = Pose6D::from_translation(Vec3::new(1.0, 0.0, 0.0)).compose(&truth);
        assert!(matches!(icp(&seg, &idx, &init, &IcpParams::default()), Err(Error::Diverged { .. })));
    }

    #[test]
    fn residual_history_never_increases() {
        let (idx, seg, truth) = setup(0.002);
        for k in 0..20 {
            let a = k as f64 * 0.3;
            let init = Pose6D::from_axis_angle(Vec3::new(a.cos(), a.sin(), 0.3), 0.15, Vec3::new(0.004 * a.sin(), 0.0, 0.003)).compose(&truth);
            let r = icp(&seg, &idx, &init, &IcpParams::default()).unwrap();
            assert!(r.residuals_monotone(), "{:?}", r.history);
        }
    }
}
