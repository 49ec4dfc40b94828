//! Chamfer-style distances between skeletons: joint-to-joint, joint-to-bone,
//! and bone-to-bone. All values are reported in percent of normalized-space
//! units (distance × 100).

use super::{ChamferTriple, RewardError};
use crate::skeleton::SkeletonTree;
use nalgebra::Vector3;

/// Distance from a point to a segment; a zero-length segment degrades to the
/// point distance.
pub fn point_segment_distance(p: Vector3<f64>, a: Vector3<f64>, b: Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Bone segments as endpoint pairs. A single-joint tree contributes its root
/// as a zero-length segment so the joint/bone distances stay defined.
fn segments(tree: &SkeletonTree) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let bones = tree.bones();
    if bones.is_empty() {
        return tree.joints().iter().map(|j| (j.position, j.position)).collect();
    }
    bones
        .iter()
        .map(|b| (tree.position(b.parent), tree.position(b.joint)))
        .collect()
}

fn mean_min_point_to_points(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> f64 {
    let sum: f64 = from
        .iter()
        .map(|p| {
            to.iter()
                .map(|q| (p - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    sum / from.len() as f64
}

fn mean_min_point_to_segments(
    from: &[Vector3<f64>],
    to: &[(Vector3<f64>, Vector3<f64>)],
) -> f64 {
    let sum: f64 = from
        .iter()
        .map(|p| {
            to.iter()
                .map(|&(a, b)| point_segment_distance(*p, a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    sum / from.len() as f64
}

/// Points along every segment, endpoint-inclusive.
fn sample_segments(
    segs: &[(Vector3<f64>, Vector3<f64>)],
    samples_per_bone: usize,
) -> Vec<Vector3<f64>> {
    let s = samples_per_bone.max(1);
    let mut out = Vec::with_capacity(segs.len() * s);
    for &(a, b) in segs {
        if s == 1 {
            out.push((a + b) * 0.5);
        } else {
            for i in 0..s {
                let t = i as f64 / (s - 1) as f64;
                out.push(a + (b - a) * t);
            }
        }
    }
    out
}

/// Symmetrized chamfer triple between two skeletons.
///
/// Each term is `0.5 * (mean_A min_B d + mean_B min_A d) * 100`: J2J over the
/// joint sets, J2B between joints and the opposing bone segments, B2B over
/// `samples_per_bone` points per segment.
pub fn chamfer_metrics(
    pred: &SkeletonTree,
    gt: &SkeletonTree,
    samples_per_bone: usize,
) -> Result<ChamferTriple, RewardError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(RewardError::Domain("chamfer over an empty skeleton".into()));
    }
    let pj = pred.positions();
    let gj = gt.positions();
    let ps = segments(pred);
    let gs = segments(gt);

    let cd_j2j = 0.5 * (mean_min_point_to_points(&pj, &gj) + mean_min_point_to_points(&gj, &pj));
    let cd_j2b =
        0.5 * (mean_min_point_to_segments(&pj, &gs) + mean_min_point_to_segments(&gj, &ps));
    let pb = sample_segments(&ps, samples_per_bone);
    let gb = sample_segments(&gs, samples_per_bone);
    let cd_b2b = 0.5 * (mean_min_point_to_points(&pb, &gb) + mean_min_point_to_points(&gb, &pb));

    Ok(ChamferTriple {
        cd_j2j: cd_j2j * 100.0,
        cd_j2b: cd_j2b * 100.0,
        cd_b2b: cd_b2b * 100.0,
    })
}
