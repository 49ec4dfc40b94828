//! Topology-aware skeleton scoring: the chamfer family, optimal joint
//! matching with IoU/precision/recall, ordered tree edit distance,
//! hierarchical Jaccard similarity, and the composite 5-point reward
//! (3 spatial points + 2 topological points).

mod chamfer;
mod matching;
mod ted;

pub use chamfer::{chamfer_metrics, point_segment_distance};
pub use matching::{match_joints, Correspondence};
pub use ted::tree_edit_distance;

use crate::skeleton::SkeletonTree;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// CD-J2J / CD-J2B / CD-B2B in percent of normalized-space units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChamferTriple {
    pub cd_j2j: f64,
    pub cd_j2b: f64,
    pub cd_b2b: f64,
}

impl ChamferTriple {
    pub fn as_array(&self) -> [f64; 3] {
        [self.cd_j2j, self.cd_j2b, self.cd_b2b]
    }
}

/// Scoring knobs shared by the reward and the evaluation metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Joint-matching / relabel tolerance in normalized units.
    pub epsilon: f64,
    /// Points sampled per bone segment for CD-B2B.
    pub samples_per_bone: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { epsilon: 0.05, samples_per_bone: 10 }
    }
}

/// Composite reward on the 5-point scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Spatial component, in `[0, 3]`.
    pub r_cd: f64,
    /// Tree-edit component, in `[0, 1]`.
    pub r_ted: f64,
    /// Hierarchical-Jaccard component, in `[0, 1]`.
    pub r_hjs: f64,
    /// `r_cd + r_ted + r_hjs`, in `[0, 5]`.
    pub total: f64,
}

/// Joint-set overlap metrics, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouPrecisionRecall {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    /// True when either skeleton was empty (all values forced to 0).
    pub degenerate: bool,
}

/// Mean children-set Jaccard over matched joints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HjsResult {
    pub value: f64,
    /// True when no joints matched (value forced to 0).
    pub degenerate: bool,
}

/// Per-pair evaluation record: every rigging metric plus the reward, with the
/// configuration echoed for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReport {
    pub cd_j2j: f64,
    pub cd_j2b: f64,
    pub cd_b2b: f64,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub reward: RewardBreakdown,
    pub config: RewardConfig,
}

/// Precision/recall/IoU through the optimal matching: with `m` matched
/// pairs, `precision = m/|J_p|`, `recall = m/|J_g|`,
/// `iou = m/(|J_p| + |J_g| - m)`, all in percent.
pub fn iou_precision_recall(
    pred: &SkeletonTree,
    gt: &SkeletonTree,
    epsilon: f64,
) -> IouPrecisionRecall {
    if pred.is_empty() || gt.is_empty() {
        return IouPrecisionRecall { iou: 0.0, precision: 0.0, recall: 0.0, degenerate: true };
    }
    let m = match_joints(pred, gt, epsilon).len() as f64;
    let (np, ng) = (pred.len() as f64, gt.len() as f64);
    IouPrecisionRecall {
        iou: 100.0 * m / (np + ng - m),
        precision: 100.0 * m / np,
        recall: 100.0 * m / ng,
        degenerate: false,
    }
}

/// Mean Jaccard index of children sets over corresponded joints. A child
/// counts toward the intersection only when its own match lies in the other
/// side's children set; a matched joint that is leaf on both sides scores 1.
pub fn hierarchical_jaccard(
    pred: &SkeletonTree,
    gt: &SkeletonTree,
    corr: &Correspondence,
) -> HjsResult {
    if corr.is_empty() {
        return HjsResult { value: 0.0, degenerate: true };
    }
    let map: std::collections::HashMap<usize, usize> = corr.pairs.iter().copied().collect();
    let pred_children = pred.children_table();
    let gt_children = gt.children_table();

    let mut sum = 0.0;
    for &(p, g) in &corr.pairs {
        let cp = &pred_children[p];
        let cg = &gt_children[g];
        let inter = cp
            .iter()
            .filter(|c| map.get(c).is_some_and(|m| cg.contains(m)))
            .count();
        let union = cp.len() + cg.len() - inter;
        sum += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    }
    HjsResult { value: sum / corr.len() as f64, degenerate: false }
}

/// The composite 5-point reward.
///
/// `R_CD = Σ_i max(1 - CD_i / 10%, 0)` over the three chamfer terms;
/// `R_TED = 1 - TED / (|J_p| + |J_g|)` over the canonicalized trees;
/// `R_HJS` is the matched-children Jaccard mean; total is their sum.
pub fn composite_reward(
    pred: &SkeletonTree,
    gt: &SkeletonTree,
    config: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(RewardError::Domain("reward over an empty skeleton".into()));
    }
    let predc = pred.canonicalize_children_order();
    let gtc = gt.canonicalize_children_order();

    let cd = chamfer_metrics(&predc, &gtc, config.samples_per_bone)?;
    let r_cd: f64 = cd
        .as_array()
        .iter()
        .map(|c| (1.0 - c / 10.0).max(0.0))
        .sum();

    let ted = tree_edit_distance(&predc, &gtc, config.epsilon);
    let r_ted = 1.0 - ted as f64 / (predc.len() + gtc.len()) as f64;

    let corr = match_joints(&predc, &gtc, config.epsilon);
    let r_hjs = hierarchical_jaccard(&predc, &gtc, &corr).value;

    Ok(RewardBreakdown { r_cd, r_ted, r_hjs, total: r_cd + r_ted + r_hjs })
}

/// Full metric record for one (pred, gt) pair.
pub fn score_pair(
    pred: &SkeletonTree,
    gt: &SkeletonTree,
    config: &RewardConfig,
) -> Result<ScoreReport, RewardError> {
    let predc = pred.canonicalize_children_order();
    let gtc = gt.canonicalize_children_order();
    let cd = chamfer_metrics(&predc, &gtc, config.samples_per_bone)?;
    let ipr = iou_precision_recall(&predc, &gtc, config.epsilon);
    let reward = composite_reward(&predc, &gtc, config)?;
    Ok(ScoreReport {
        cd_j2j: cd.cd_j2j,
        cd_j2b: cd.cd_j2b,
        cd_b2b: cd.cd_b2b,
        iou: ipr.iou,
        precision: ipr.precision,
        recall: ipr.recall,
        reward,
        config: *config,
    })
}
