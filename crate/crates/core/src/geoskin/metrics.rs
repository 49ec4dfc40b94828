//! Skinning evaluation: influential-bone precision/recall, mean per-vertex L1
//! weight error, and the mean deformation distance under random poses.

use super::GeoskinError;
use crate::randutil::{rotation_about_random_axis, sample_standard_normal};
use crate::skeleton::{linear_blend_skinning, Mesh, Pose, SkeletonTree, SkinWeights};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A bone is "influential" for a vertex when its weight exceeds this.
pub const INFLUENCE_THRESHOLD: f64 = 1e-4;

/// Standard deviation of per-joint pose angles for the distance metric.
pub const POSE_SIGMA_DEG: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkinningMetrics {
    /// Influential-bone identification precision, percent.
    pub precision: f64,
    /// Influential-bone identification recall, percent.
    pub recall: f64,
    /// Mean per-vertex L1 distance between weight rows.
    pub avg_l1: f64,
    /// Mean vertex displacement between deformations under predicted vs
    /// ground-truth weights, over random poses.
    pub avg_dist: f64,
}

/// Compares predicted against ground-truth weights on one asset.
///
/// Both weight sets must cover every mesh vertex. Poses draw one rotation per
/// joint about a random axis with angle ~ N(0 deg, 15 deg).
pub fn skinning_metrics(
    pred: &SkinWeights,
    gt: &SkinWeights,
    mesh: &Mesh,
    tree: &SkeletonTree,
    pose_count: usize,
    rng: &mut impl Rng,
) -> Result<SkinningMetrics, GeoskinError> {
    let nv = mesh.vertices.len();
    for (name, w) in [("pred", pred), ("gt", gt)] {
        if w.vertex_count() != nv {
            return Err(GeoskinError::Contract(format!(
                "{name} weights cover {} of {nv} vertices",
                w.vertex_count()
            )));
        }
        if let Some(v) = w.per_vertex.iter().position(|row| row.is_empty()) {
            return Err(GeoskinError::Contract(format!(
                "{name} weights leave vertex {v} uncovered"
            )));
        }
    }

    let slots = tree.slot_count();
    let (mut tp, mut pred_count, mut gt_count) = (0usize, 0usize, 0usize);
    let mut l1_sum = 0.0;
    for v in 0..nv {
        let pr = pred.dense_row(v, slots);
        let gr = gt.dense_row(v, slots);
        let mut l1 = 0.0;
        for (pw, gw) in pr.iter().zip(&gr) {
            let p_in = *pw > INFLUENCE_THRESHOLD;
            let g_in = *gw > INFLUENCE_THRESHOLD;
            tp += usize::from(p_in && g_in);
            pred_count += usize::from(p_in);
            gt_count += usize::from(g_in);
            l1 += (pw - gw).abs();
        }
        l1_sum += l1;
    }
    let precision = if pred_count == 0 { 0.0 } else { 100.0 * tp as f64 / pred_count as f64 };
    let recall = if gt_count == 0 { 0.0 } else { 100.0 * tp as f64 / gt_count as f64 };
    let avg_l1 = l1_sum / nv as f64;

    let mut dist_sum = 0.0;
    let mut dist_n = 0usize;
    for _ in 0..pose_count {
        let mut pose = Pose::identity(tree.len());
        for r in pose.rotations.iter_mut() {
            let angle = sample_standard_normal(rng) * POSE_SIGMA_DEG.to_radians();
            *r = rotation_about_random_axis(rng, angle);
        }
        let deformed_pred = linear_blend_skinning(mesh, tree, pred, &pose)
            .map_err(|e| GeoskinError::Contract(e.to_string()))?;
        let deformed_gt = linear_blend_skinning(mesh, tree, gt, &pose)
            .map_err(|e| GeoskinError::Contract(e.to_string()))?;
        for (a, b) in deformed_pred.vertices.iter().zip(&deformed_gt.vertices) {
            dist_sum += (a - b).norm();
            dist_n += 1;
        }
    }
    let avg_dist = if dist_n == 0 { 0.0 } else { dist_sum / dist_n as f64 };

    Ok(SkinningMetrics { precision, recall, avg_l1, avg_dist })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn tiny_asset() -> (Mesh, SkeletonTree, SkinWeights) {
        let mesh = Mesh::new(
            vec![v(0.0, 0.0, -0.2), v(0.05, 0.0, 0.0), v(0.0, 0.05, 0.2)],
            vec![[0, 1, 2]],
        );
        let tree = SkeletonTree::from_positions(&[
            (v(0.0, 0.0, -0.2), None),
            (v(0.0, 0.0, 0.0), Some(0)),
            (v(0.0, 0.0, 0.2), Some(1)),
        ]);
        let weights = SkinWeights {
            per_vertex: vec![
                vec![(1, 1.0)],
                vec![(1, 0.5), (2, 0.5)],
                vec![(2, 1.0)],
            ],
        };
        (mesh, tree, weights)
    }

    #[test]
    fn ground_truth_against_itself_is_perfect() {
        let (mesh, tree, w) = tiny_asset();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = skinning_metrics(&w, &w, &mesh, &tree, 10, &mut rng).unwrap();
        assert_eq!(m.precision, 100.0);
        assert_eq!(m.recall, 100.0);
        assert_eq!(m.avg_l1, 0.0);
        assert!(m.avg_dist < 1e-12);
    }

    #[test]
    fn per_vertex_l1_stays_below_two() {
        let (mesh, tree, gt) = tiny_asset();
        let pred = SkinWeights {
            per_vertex: vec![vec![(0, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = skinning_metrics(&pred, &gt, &mesh, &tree, 2, &mut rng).unwrap();
        assert!(m.avg_l1 <= 2.0 + 1e-12);
        assert!(m.avg_dist > 0.0);
    }

    #[test]
    fn coverage_mismatch_is_contract_error() {
        let (mesh, tree, gt) = tiny_asset();
        let pred = SkinWeights { per_vertex: vec![vec![(0, 1.0)]] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(skinning_metrics(&pred, &gt, &mesh, &tree, 1, &mut rng).is_err());
    }
}
