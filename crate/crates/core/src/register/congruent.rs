//! 4-point congruent set search.
//!
//! A coplanar base `a, b, c, d` drawn from the segment is characterised by the
//! lengths `|ab|`, `|cd|` and the two ratios at which the lines `ab` and `cd`
//! cross. Both ratios are preserved by rigid motion, so congruent quadruples in
//! the model are found by pairing model point pairs whose intermediate points
//! `p + r (q - p)` coincide.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::index::GridIndex;
use super::lcp::lcp_score;
use super::rigid::kabsch;
use super::RegistrationResult;
use crate::geom::{rotation_error_deg, translation_error_m, Pose6D, Vec3};
use crate::models::SAMPLE_SEED;
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CongruentParams {
    /// Expected fraction of the segment extent a base may span.
    pub overlap: f64,
    /// Congruence tolerance, meters.
    pub delta: f64,
    pub max_bases: usize,
    /// Wall-clock budget per search, seconds.
    pub time_budget_s: f64,
    pub segment_samples: usize,
    pub model_samples: usize,
    /// Inlier distance used to score hypotheses, meters.
    pub lcp_epsilon: f64,
    /// Stop as soon as a hypothesis explains this fraction of the segment.
    pub target_score: f64,
    /// Number of distinct best hypotheses kept for refinement.
    pub keep: usize,
}

impl Default for CongruentParams {
    fn default() -> Self {
        CongruentParams {
            overlap: 0.5,
            delta: 0.005,
            max_bases: 40,
            time_budget_s: 1.5,
            segment_samples: 250,
            model_samples: 320,
            lcp_epsilon: 0.008,
            target_score: 0.98,
            keep: 5,
        }
    }
}

impl CongruentParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::invalid("congruent params", r));
        if !(self.overlap > 0.0 && self.overlap <= 1.0) {
            return bad("overlap must lie in (0, 1]");
        }
        if !(self.delta > 0.0) || !(self.lcp_epsilon > 0.0) || !(self.time_budget_s > 0.0) {
            return bad("delta, lcp_epsilon and time_budget_s must be positive");
        }
        if self.max_bases == 0 || self.keep == 0 || self.segment_samples < 4 || self.model_samples < 4 {
            return bad("max_bases >= 1, keep >= 1 and at least 4 segment and model samples required");
        }
        Ok(())
    }
}

/// Voxels (cell `eps / 4`) whose centre lies within `eps` of a model sample:
/// a constant-time approximate inlier test for hypothesis scoring.
#[derive(Clone, Debug)]
struct Occupancy {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    bits: Vec<bool>,
}

impl Occupancy {
    fn new(samples: &[Vec3], eps: f64) -> Self {
        let cell = eps / 4.0;
        let (lo, hi) = samples.iter().fold((samples[0], samples[0]), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        let origin = lo - Vec3::repeat(eps + cell);
        let size = hi - lo + Vec3::repeat(2.0 * (eps + cell));
        let dims = [0, 1, 2].map(|k| (size[k] / cell).ceil() as usize + 1);
        let index = GridIndex::new(samples, eps);
        let mut bits = vec![false; dims[0] * dims[1] * dims[2]];
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let c = origin + Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * cell;
                    bits[(z * dims[1] + y) * dims[0] + x] = index.has_neighbor_within(&c, eps);
                }
            }
        }
        Occupancy { origin, cell, dims, bits }
    }

    fn hit(&self, p: &Vec3) -> bool {
        let q = (p - self.origin) / self.cell;
        if !(q.x >= 0.0 && q.y >= 0.0 && q.z >= 0.0) {
            return false;
        }
        let (x, y, z) = (q.x as usize, q.y as usize, q.z as usize);
        x < self.dims[0] && y < self.dims[1] && z < self.dims[2] && self.bits[(z * self.dims[1] + y) * self.dims[0] + x]
    }

    /// Number of `pts` mapped by `t` that hit, or `None` once more than
    /// `pts.len() - needed` have missed.
    fn count(&self, pts: &[Vec3], t: &Pose6D, needed: usize) -> Option<usize> {
        let allowed = pts.len().saturating_sub(needed);
        let mut misses = 0;
        for p in pts {
            if !self.hit(&t.transform_point(p)) {
                misses += 1;
                if misses > allowed {
                    return None;
                }
            }
        }
        Some(pts.len() - misses)
    }
}

/// Model subsample with its point pairs sorted by length.
#[derive(Clone, Debug)]
pub struct CongruentModel {
    points: Vec<Vec3>,
    pairs: Vec<(f64, u32, u32)>,
    occupancy: Occupancy,
}

impl CongruentModel {
    pub fn new(samples: &[Vec3], params: &CongruentParams) -> Self {
        let mut r = rng::stream(SAMPLE_SEED, &[rng::hash_str("congruent")]);
        let k = params.model_samples.min(samples.len());
        let mut idx = sample(&mut r, samples.len(), k).into_vec();
        idx.sort_unstable();
        let points: Vec<Vec3> = idx.into_iter().map(|i| samples[i]).collect();
        let mut pairs = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                pairs.push(((points[i] - points[j]).norm(), i as u32, j as u32));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        CongruentModel {
            points,
            pairs,
            occupancy: Occupancy::new(samples, params.lcp_epsilon),
        }
    }

    /// Ordered pairs `(p, q)` with `| |pq| - len | <= tol`.
    fn pairs_near(&self, len: f64, tol: f64) -> impl Iterator<Item = (usize, usize)> + '_ {
        let lo = self.pairs.partition_point(|p| p.0 < len - tol);
        let hi = self.pairs.partition_point(|p| p.0 <= len + tol);
        self.pairs[lo..hi]
            .iter()
            .flat_map(|&(_, i, j)| [(i as usize, j as usize), (j as usize, i as usize)])
    }
}

/// Crossing parameters of lines `ab` and `cd` and the gap between them:
/// `a + r1 (b - a)` and `c + r2 (d - c)` are the closest points.
pub fn base_ratios(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> Option<(f64, f64, f64)> {
    let (u, v, w) = (b - a, d - c, a - c);
    let (uu, uv, vv, uw, vw) = (u.dot(&u), u.dot(&v), v.dot(&v), u.dot(&w), v.dot(&w));
    let den = uu * vv - uv * uv;
    if den <= 1e-12 * uu * vv {
        return None;
    }
    let r1 = (uv * vw - vv * uw) / den;
    let r2 = (uu * vw - uv * uw) / den;
    let gap = ((a + u * r1) - (c + v * r2)).norm();
    Some((r1, r2, gap))
}

/// Rigid transform taking the frame spanned by `src[0..3]` onto that of `dst[0..3]`.
fn frame_transform(src: &[Vec3; 4], dst: &[Vec3; 4]) -> Option<Pose6D> {
    let frame = |p: &[Vec3; 4]| {
        let x = (p[1] - p[0]).try_normalize(1e-12)?;
        let y = ((p[2] - p[0]) - x * x.dot(&(p[2] - p[0]))).try_normalize(1e-12)?;
        Some(nalgebra::Matrix3::from_columns(&[x, y, x.cross(&y)]))
    };
    let r = frame(dst)? * frame(src)?.transpose();
    let cs = (src[0] + src[1] + src[2] + src[3]) / 4.0;
    let cd = (dst[0] + dst[1] + dst[2] + dst[3]) / 4.0;
    Some(Pose6D::from_matrix(&r, cd - r * cs))
}

struct Base {
    pts: [Vec3; 4],
    r1: f64,
    r2: f64,
}

fn draw_base(s: &[Vec3], span: f64, delta: f64, r: &mut rng::Rng) -> Option<Base> {
    const CANDIDATES: usize = 48;
    let a = s[r.random_range(0..s.len())];
    let b = (0..CANDIDATES)
        .map(|_| s[r.random_range(0..s.len())])
        .filter(|p| (p - a).norm() <= span)
        .max_by(|p, q| (p - a).norm().total_cmp(&(q - a).norm()))?;
    let ab = b - a;
    if ab.norm() < 0.25 * span {
        return None;
    }
    let off_line = |p: &Vec3| (p - a).cross(&ab).norm() / ab.norm();
    let c = (0..CANDIDATES)
        .map(|_| s[r.random_range(0..s.len())])
        .filter(|p| (p - a).norm() <= span && (p - b).norm() <= span)
        .max_by(|p, q| off_line(p).total_cmp(&off_line(q)))?;
    if off_line(&c) < 0.2 * ab.norm() {
        return None;
    }
    let valid: Vec<(Vec3, f64, f64)> = s
        .iter()
        .filter(|d| (*d - c).norm() >= 0.25 * span && (*d - a).norm() <= span && (*d - b).norm() <= span)
        .filter_map(|d| {
            let (r1, r2, gap) = base_ratios(&a, &b, &c, d)?;
            (gap <= 0.5 * delta && (0.1..=0.9).contains(&r1) && (0.1..=0.9).contains(&r2)).then_some((*d, r1, r2))
        })
        .collect();
    if valid.is_empty() {
        return None;
    }
    let (d, r1, r2) = valid[r.random_range(0..valid.len())];
    Some(Base {
        pts: [a, b, c, d],
        r1,
        r2,
    })
}

#[cfg(not(target_arch = "wasm32"))]
fn deadline(budget_s: f64) -> impl Fn() -> bool {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64() > budget_s
}

// `Instant` is unavailable on wasm32; searches there stop on `max_bases` only.
#[cfg(target_arch = "wasm32")]
fn deadline(_budget_s: f64) -> impl Fn() -> bool {
    || false
}

/// Fraction of `pts` (segment points mapped into the model frame by `t`) with a
/// model point within `eps`, and the summed truncated squared distance.
fn score(pts: &[Vec3], model: &GridIndex, t: &Pose6D, eps: f64) -> (usize, f64) {
    let mut hits = 0;
    let mut sq = 0.0;
    for p in pts {
        match model.nearest_within(&t.transform_point(p), eps) {
            Some((_, d)) => {
                hits += 1;
                sq += d * d;
            }
            None => sq += eps * eps,
        }
    }
    (hits, sq)
}

/// A scored hypothesis: `t` maps segment points into the model frame.
#[derive(Clone, Copy, Debug)]
struct Scored {
    hits: usize,
    sq: f64,
    t: Pose6D,
}

impl Scored {
    fn beats(&self, other: &Scored) -> bool {
        self.hits > other.hits || (self.hits == other.hits && self.sq < other.sq)
    }
}

/// The best mutually distinct hypotheses, best first.
struct Shortlist {
    cap: usize,
    items: Vec<Scored>,
}

impl Shortlist {
    fn offer(&mut self, h: Scored) {
        let near = |a: &Pose6D| rotation_error_deg(a, &h.t) < 10.0 && translation_error_m(a, &h.t) < 0.01;
        if let Some(k) = self.items.iter().position(|x| near(&x.t)) {
            if !h.beats(&self.items[k]) {
                return;
            }
            self.items.remove(k);
        }
        let at = self.items.iter().position(|x| h.beats(x)).unwrap_or(self.items.len());
        self.items.insert(at, h);
        self.items.truncate(self.cap);
    }

    /// Hits a new hypothesis needs to enter the list.
    fn floor(&self) -> usize {
        if self.items.len() < self.cap {
            0
        } else {
            self.items.last().map_or(0, |x| x.hits)
        }
    }
}

/// Re-estimate `t` from the sample points it maps within `eps` of the model.
fn polish(s: &[Vec3], model: &GridIndex, t: &Pose6D, eps: f64) -> Pose6D {
    let mut t = *t;
    for _ in 0..3 {
        let (src, dst): (Vec<Vec3>, Vec<Vec3>) = s
            .iter()
            .filter_map(|p| model.nearest_within(&t.transform_point(p), eps).map(|(j, _)| (*p, model.points()[j])))
            .unzip();
        match kabsch(&src, &dst) {
            Ok(next) => t = next,
            Err(_) => break,
        }
    }
    t
}

/// Outcome of a congruent search before refinement.
#[derive(Clone, Debug)]
pub struct Hypotheses {
    /// Model-to-world poses, best first.
    pub poses: Vec<Pose6D>,
    /// Fraction of the segment sample explained by each pose, within `lcp_epsilon`.
    pub scores: Vec<f64>,
    /// Root mean square truncated distance of the best pose, meters.
    pub residual: f64,
    pub bases: usize,
    pub timed_out: bool,
}

/// Search for the rigid poses (model-to-world) under which the model best
/// explains the segment. `model_index` holds the model samples in the model frame.
pub fn congruent_hypotheses(
    segment: &[Vec3],
    model: &CongruentModel,
    model_index: &GridIndex,
    params: &CongruentParams,
    seed: u64,
) -> Result<Hypotheses> {
    params.validate()?;
    if segment.len() < 4 {
        return Err(Error::SegmentTooSmall { points: segment.len() });
    }
    let expired = deadline(params.time_budget_s);
    let mut r = rng::stream(seed, &[rng::hash_str("congruent_search")]);
    let k = params.segment_samples.min(segment.len());
    let s: Vec<Vec3> = sample(&mut r, segment.len(), k).into_iter().map(|i| segment[i]).collect();
    let (lo, hi) = s.iter().fold((s[0], s[0]), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    let span = params.overlap * (hi - lo).norm();
    let (delta, eps) = (params.delta, params.lcp_epsilon);

    let mut list = Shortlist {
        cap: params.keep,
        items: Vec::new(),
    };
    let mut bases = 0;
    let mut attempts = 0;
    let mut timed_out = false;
    'bases: while bases < params.max_bases {
        if expired() {
            timed_out = true;
            break;
        }
        attempts += 1;
        if attempts > 50 * params.max_bases.max(20) {
            break;
        }
        let Some(base) = draw_base(&s, span, delta, &mut r) else { continue };
        bases += 1;
        let [a, b, c, d] = base.pts;
        let base_d = [(a - c).norm(), (a - d).norm(), (b - c).norm(), (b - d).norm()];
        let p = &model.points;
        let e1: Vec<(usize, usize)> = model.pairs_near((b - a).norm(), delta).collect();
        let e1_pts: Vec<Vec3> = e1.iter().map(|&(i, j)| p[i] + (p[j] - p[i]) * base.r1).collect();
        let e1_index = GridIndex::new(&e1_pts, delta);
        for (n, (k, l)) in model.pairs_near((d - c).norm(), delta).enumerate() {
            if n % 256 == 0 && expired() {
                timed_out = true;
                break 'bases;
            }
            let e2 = p[k] + (p[l] - p[k]) * base.r2;
            for m in e1_index.within(&e2, delta) {
                let (i, j) = e1[m];
                let quad_d = [(p[i] - p[k]).norm(), (p[i] - p[l]).norm(), (p[j] - p[k]).norm(), (p[j] - p[l]).norm()];
                if base_d.iter().zip(&quad_d).any(|(x, y)| (x - y).abs() > 2.0 * delta) {
                    continue;
                }
                let quad = [p[i], p[j], p[k], p[l]];
                let Some(t) = frame_transform(&base.pts, &quad) else { continue };
                if base.pts.iter().zip(&quad).any(|(x, y)| (t.transform_point(x) - y).norm() > 2.0 * delta) {
                    continue;
                }
                let needed = list.floor().saturating_sub(s.len() / 50);
                if model.occupancy.count(&s, &t, needed).is_none() {
                    continue;
                }
                let Ok(t) = kabsch(&base.pts, &quad) else { continue };
                let (hits, sq) = score(&s, model_index, &t, eps);
                list.offer(Scored { hits, sq, t });
            }
        }
        if list.items.first().is_some_and(|h| h.hits as f64 >= params.target_score * s.len() as f64) {
            break;
        }
    }
    if list.items.is_empty() {
        return Err(Error::NoValidBase);
    }
    for h in &mut list.items {
        let t = polish(&s, model_index, &h.t, eps);
        let (hits, sq) = score(&s, model_index, &t, eps);
        let polished = Scored { hits, sq, t };
        if !h.beats(&polished) {
            *h = polished;
        }
    }
    list.items.sort_by(|a, b| b.hits.cmp(&a.hits).then(a.sq.total_cmp(&b.sq)));
    Ok(Hypotheses {
        poses: list.items.iter().map(|h| h.t.inverse()).collect(),
        scores: list.items.iter().map(|h| h.hits as f64 / s.len() as f64).collect(),
        residual: (list.items[0].sq / s.len() as f64).sqrt(),
        bases,
        timed_out,
    })
}

/// The single best congruent-search pose, scored by LCP.
pub fn congruent_search(
    segment: &[Vec3],
    model: &CongruentModel,
    model_index: &GridIndex,
    params: &CongruentParams,
    seed: u64,
) -> Result<RegistrationResult> {
    let h = congruent_hypotheses(segment, model, model_index, params, seed)?;
    let pose = h.poses[0];
    Ok(RegistrationResult {
        pose,
        lcp: lcp_score(model_index.points(), segment, &pose, params.lcp_epsilon),
        residual: h.residual,
        iterations: h.bases,
        history: Vec::new(),
        timed_out: h.timed_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::random_rotation;
    use crate::models::ModelLibrary;
    use proptest::prelude::*;
    use rand::Rng;

    fn target(m: &crate::models::Model, p: &CongruentParams) -> (CongruentModel, GridIndex) {
        (CongruentModel::new(&m.samples, p), GridIndex::new(&m.samples, 0.01))
    }

    #[test]
    fn self_registration_is_identity() {
        let lib = ModelLibrary::asymmetric();
        let p = CongruentParams::default();
        for m in lib.iter() {
            let (cm, idx) = target(m, &p);
            let r = congruent_search(&m.samples, &cm, &idx, &p, 1).unwrap();
            assert!(r.lcp >= 0.99, "{} lcp {}", m.id(), r.lcp);
            assert!(rotation_error_deg(&r.pose, &Pose6D::identity()) < 3.0, "{}", m.id());
            assert!(translation_error_m(&r.pose, &Pose6D::identity()) < 0.005, "{}", m.id());
        }
    }

    #[test]
    fn registering_a_moved_segment_moves_the_pose() {
        let lib = ModelLibrary::asymmetric();
        let m = lib.get("wedge").unwrap();
        let p = CongruentParams::default();
        let (cm, idx) = target(m, &p);
        let t = Pose6D::from_axis_angle(Vec3::new(0.2, 1.0, -0.4), 1.3, Vec3::new(0.3, -0.1, 0.2));
        let moved: Vec<Vec3> = m.samples.iter().map(|x| t.transform_point(x)).collect();
        let r = congruent_search(&moved, &cm, &idx, &p, 2).unwrap();
        assert!(rotation_error_deg(&r.pose, &t) < 3.0);
        assert!(translation_error_m(&r.pose, &t) < 0.005);
    }

    #[test]
    fn collinear_segment_has_no_base() {
        let lib = ModelLibrary::asymmetric();
        let m = lib.iter().next().unwrap();
        let p = CongruentParams::default();
        let (cm, idx) = target(m, &p);
        let line: Vec<Vec3> = (0..50).map(|i| Vec3::new(i as f64 * 0.002, 0.0, 0.0)).collect();
        assert!(matches!(congruent_search(&line, &cm, &idx, &p, 0), Err(Error::NoValidBase)));
    }

    proptest! {
        #[test]
        fn ratios_are_rigid_invariants(seed in 0u64..10_000) {
            let mut r = rng::seeded(seed);
            let v = |r: &mut rng::Rng| Vec3::new(r.random(), r.random(), r.random());
            let (a, b, c) = (v(&mut r), v(&mut r), v(&mut r));
            // d on the line through c and a point of ab, so the base is coplanar.
            let x = a + (b - a) * r.random_range(0.2..0.8);
            let d = c + (x - c) * r.random_range(1.2..3.0);
            let t = Pose6D::new(random_rotation(&mut r), v(&mut r) * 10.0);
            prop_assume!((b - a).cross(&(c - a)).norm() > 1e-3);
            let before = base_ratios(&a, &b, &c, &d).unwrap();
            let [ta, tb, tc, td] = [a, b, c, d].map(|p| t.transform_point(&p));
            let after = base_ratios(&ta, &tb, &tc, &td).unwrap();
            prop_assert!((before.0 - after.0).abs() < 1e-9);
            prop_assert!((before.1 - after.1).abs() < 1e-9);
            prop_assert!(before.2 < 1e-9);
        }
    }
}
