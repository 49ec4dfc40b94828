//! Bone-probability prediction: a three-layer MLP over the 15 distance
//! features with two outputs per (vertex, bone) pair — a selection logit
//! (sigmoid: does this bone influence the vertex?) and a weight logit
//! (softmax across a vertex's bones: how much?).

use super::features::{DistanceFeatures, FEATURE_DIM};
use super::GeoskinError;
use crate::skeleton::{Bone, SkinWeights};
use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// MLP `15 -> hidden -> hidden -> 2` with ReLU activations, parameters in one
/// flat vector (layout: w1, b1, w2, b2, w3, b3).
#[derive(Debug, Clone)]
pub struct BoneProbModel {
    pub hidden: usize,
    pub params: Vec<f64>,
}

/// Activation cache from a forward pass, consumed by backprop.
pub struct ForwardCache {
    x: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
}

impl BoneProbModel {
    pub fn param_count(hidden: usize) -> usize {
        hidden * FEATURE_DIM + hidden + hidden * hidden + hidden + 2 * hidden + 2
    }

    /// Xavier-uniform weights, zero biases, deterministic per seed.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0f64; Self::param_count(hidden)];
        let mut offset = 0usize;
        for (fan_in, fan_out) in [(FEATURE_DIM, hidden), (hidden, hidden), (hidden, 2)] {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in params[offset..offset + fan_in * fan_out].iter_mut() {
                *p = rng.gen_range(-limit..limit);
            }
            offset += fan_in * fan_out + fan_out; // biases stay zero
        }
        Self { hidden, params }
    }

    fn offsets(&self) -> [usize; 6] {
        let h = self.hidden;
        let w1 = 0;
        let b1 = w1 + h * FEATURE_DIM;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + 2 * h;
        [w1, b1, w2, b2, w3, b3]
    }

    fn views<'a>(
        &self,
        params: &'a [f64],
    ) -> (
        ArrayView2<'a, f64>,
        &'a [f64],
        ArrayView2<'a, f64>,
        &'a [f64],
        ArrayView2<'a, f64>,
        &'a [f64],
    ) {
        let h = self.hidden;
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        (
            ArrayView2::from_shape((h, FEATURE_DIM), &params[w1..b1]).unwrap(),
            &params[b1..w2],
            ArrayView2::from_shape((h, h), &params[w2..b2]).unwrap(),
            &params[b2..w3],
            ArrayView2::from_shape((2, h), &params[w3..b3]).unwrap(),
            &params[b3..b3 + 2],
        )
    }

    /// Forward pass over feature rows; returns `[N x 2]` logits
    /// (column 0 selection, column 1 weight) and the activation cache.
    pub fn forward_rows(&self, x: Array2<f64>) -> (Array2<f64>, ForwardCache) {
        self.forward_rows_with(&self.params, x)
    }

    /// Forward with externally supplied parameters (used by the gradient
    /// checker to probe perturbed parameter vectors).
    pub fn forward_rows_with(&self, params: &[f64], x: Array2<f64>) -> (Array2<f64>, ForwardCache) {
        let (w1, b1, w2, b2, w3, b3) = self.views(params);
        let mut h1 = x.dot(&w1.t());
        for mut row in h1.rows_mut() {
            for (v, b) in row.iter_mut().zip(b1) {
                *v = (*v + b).max(0.0);
            }
        }
        let mut h2 = h1.dot(&w2.t());
        for mut row in h2.rows_mut() {
            for (v, b) in row.iter_mut().zip(b2) {
                *v = (*v + b).max(0.0);
            }
        }
        let mut y = h2.dot(&w3.t());
        for mut row in y.rows_mut() {
            for (v, b) in row.iter_mut().zip(b3) {
                *v += b;
            }
        }
        (y, ForwardCache { x, h1, h2 })
    }

    /// Backprop of `d loss / d logits` into a flat parameter gradient.
    pub fn backward_rows(&self, cache: &ForwardCache, dlogits: &Array2<f64>) -> Vec<f64> {
        let (_, _, w2, _, w3, _) = self.views(&self.params);
        let mut grads = vec![0.0f64; self.params.len()];
        let [gw1, gb1, gw2, gb2, gw3, gb3] = self.offsets();
        let h = self.hidden;

        // Layer 3.
        let dw3 = dlogits.t().dot(&cache.h2); // [2 x H]
        grads[gw3..gb3].copy_from_slice(dw3.as_standard_layout().as_slice().unwrap());
        for (k, col) in dlogits.t().rows().into_iter().enumerate() {
            grads[gb3 + k] = col.sum();
        }

        // Layer 2.
        let mut dh2 = dlogits.dot(&w3); // [N x H]
        ndarray::Zip::from(&mut dh2).and(&cache.h2).for_each(|d, &a| {
            if a <= 0.0 {
                *d = 0.0;
            }
        });
        let dw2 = dh2.t().dot(&cache.h1);
        grads[gw2..gb2].copy_from_slice(dw2.as_standard_layout().as_slice().unwrap());
        for k in 0..h {
            grads[gb2 + k] = dh2.column(k).sum();
        }

        // Layer 1.
        let mut dh1 = dh2.dot(&w2);
        ndarray::Zip::from(&mut dh1).and(&cache.h1).for_each(|d, &a| {
            if a <= 0.0 {
                *d = 0.0;
            }
        });
        let dw1 = dh1.t().dot(&cache.x);
        grads[gw1..gb1].copy_from_slice(dw1.as_standard_layout().as_slice().unwrap());
        for k in 0..h {
            grads[gb1 + k] = dh1.column(k).sum();
        }
        grads
    }
}

/// Feature rows of one vertex across all bones, as an `[B x 15]` array.
pub fn vertex_feature_matrix(features: &DistanceFeatures, vertex: usize) -> Array2<f64> {
    let nb = features.bone_count;
    let mut x = Array2::zeros((nb, FEATURE_DIM));
    for b in 0..nb {
        x.row_mut(b)
            .iter_mut()
            .zip(features.row(vertex, b))
            .for_each(|(o, &v)| *o = v);
    }
    x
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-vertex bone probabilities and top-k selections.
#[derive(Debug, Clone)]
pub struct BoneSelection {
    /// `probabilities[v][b]` in (0, 1).
    pub probabilities: Vec<Vec<f64>>,
    /// `selected[v]`: up to k bone indices, highest probability first
    /// (ties broken toward the lower index).
    pub selected: Vec<Vec<usize>>,
    /// Weight logits retained for the softmax skinning head.
    pub weight_logits: Vec<Vec<f64>>,
}

/// Runs the model on every vertex and keeps the `k` most probable bones
/// (all of them when the skeleton has fewer than `k`).
pub fn predict_influencing_bones(
    model: &BoneProbModel,
    features: &DistanceFeatures,
    k: usize,
) -> BoneSelection {
    let mut probabilities = Vec::with_capacity(features.vertex_count);
    let mut selected = Vec::with_capacity(features.vertex_count);
    let mut weight_logits = Vec::with_capacity(features.vertex_count);
    for v in 0..features.vertex_count {
        let x = vertex_feature_matrix(features, v);
        let (y, _) = model.forward_rows(x);
        let probs: Vec<f64> = (0..features.bone_count).map(|b| sigmoid(y[(b, 0)])).collect();
        let logits: Vec<f64> = (0..features.bone_count).map(|b| y[(b, 1)]).collect();
        let mut order: Vec<usize> = (0..features.bone_count).collect();
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        order.truncate(k);
        probabilities.push(probs);
        selected.push(order);
        weight_logits.push(logits);
    }
    BoneSelection { probabilities, selected, weight_logits }
}

/// Summed binary cross-entropy over all (vertex, bone) pairs.
pub fn selection_loss(probabilities: &[f64], labels: &[f64]) -> f64 {
    debug_assert_eq!(probabilities.len(), labels.len());
    probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            let p = p.clamp(1e-12, 1.0 - 1e-12);
            -l * p.ln() - (1.0 - l) * (1.0 - p).ln()
        })
        .sum()
}

/// KL divergence from predicted to ground-truth rows,
/// `Σ_i Σ_j ŵ_ij ln(ŵ_ij / w_ij)`, with predictions clamped below at 1e-8.
pub fn distribution_loss(pred: &SkinWeights, gt: &SkinWeights, slot_count: usize) -> f64 {
    debug_assert_eq!(pred.vertex_count(), gt.vertex_count());
    let mut total = 0.0;
    for v in 0..gt.vertex_count() {
        let p = pred.dense_row(v, slot_count);
        let g = gt.dense_row(v, slot_count);
        for (pw, gw) in p.iter().zip(&g) {
            if *gw > 0.0 {
                total += gw * (gw / pw.max(1e-8)).ln();
            }
        }
    }
    total
}

/// Downstream weight predictor over a selected bone set.
pub enum SkinningHead<'a> {
    /// Softmax of the model's weight logits over the selected bones.
    SoftmaxLogits,
    /// Ground truth restricted to its own support (within the selection) and
    /// renormalized; the identity oracle for metric tests.
    OracleRestrict(&'a SkinWeights),
}

/// Produces row-normalized skin weights supported on each vertex's selected
/// bones. Slot indices are the bones' end-joint ids.
pub fn predict_skin_weights(
    selection: &BoneSelection,
    bones: &[Bone],
    head: &SkinningHead,
) -> Result<SkinWeights, GeoskinError> {
    let mut per_vertex = Vec::with_capacity(selection.selected.len());
    for (v, sel) in selection.selected.iter().enumerate() {
        if sel.is_empty() {
            return Err(GeoskinError::Domain(format!(
                "vertex {v} has an empty bone selection"
            )));
        }
        let row: Vec<(usize, f64)> = match head {
            SkinningHead::SoftmaxLogits => {
                let logits: Vec<f64> =
                    sel.iter().map(|&b| selection.weight_logits[v][b]).collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                sel.iter()
                    .zip(&exps)
                    .map(|(&b, e)| (bones[b].joint, e / sum))
                    .collect()
            }
            SkinningHead::OracleRestrict(gt) => {
                let selected_slots: Vec<usize> = sel.iter().map(|&b| bones[b].joint).collect();
                let kept: Vec<(usize, f64)> = gt.per_vertex[v]
                    .iter()
                    .filter(|(slot, w)| *w > 0.0 && selected_slots.contains(slot))
                    .copied()
                    .collect();
                if kept.is_empty() {
                    return Err(GeoskinError::Domain(format!(
                        "vertex {v}: oracle head found no ground-truth support in the selection"
                    )));
                }
                let sum: f64 = kept.iter().map(|&(_, w)| w).sum();
                kept.into_iter().map(|(s, w)| (s, w / sum)).collect()
            }
        };
        let mut row = row;
        row.sort_by_key(|&(slot, _)| slot);
        per_vertex.push(row);
    }
    Ok(SkinWeights { per_vertex })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn selection_loss_limits() {
        // Confident correct prediction: near-zero loss.
        assert!(selection_loss(&[1.0 - 1e-12], &[1.0]) < 1e-9);
        // Coin-flip probabilities: ln 2 per term.
        let l = selection_loss(&[0.5, 0.5], &[1.0, 0.0]);
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(selection_loss(&[0.2, 0.9], &[1.0, 0.0]) >= 0.0);
    }

    #[test]
    fn distribution_loss_zero_on_equal_rows() {
        let w = SkinWeights { per_vertex: vec![vec![(0, 0.25), (1, 0.75)]] };
        assert_eq!(distribution_loss(&w, &w, 3), 0.0);
    }

    #[test]
    fn distribution_loss_nonnegative_and_large_on_disjoint() {
        let gt = SkinWeights { per_vertex: vec![vec![(0, 1.0)]] };
        let pred = SkinWeights { per_vertex: vec![vec![(1, 1.0)]] };
        let l = distribution_loss(&pred, &gt, 2);
        assert!(l.is_finite());
        assert!(l > 10.0); // ln(1/1e-8) ~ 18.4
        let near = SkinWeights { per_vertex: vec![vec![(0, 0.9), (1, 0.1)]] };
        assert!(distribution_loss(&near, &gt, 2) >= 0.0);
    }

    #[test]
    fn forward_probabilities_stay_in_open_interval() {
        let model = BoneProbModel::init(16, 7);
        let x = arr2(&[[0.5f64; FEATURE_DIM], [-0.25; FEATURE_DIM]]);
        let (y, _) = model.forward_rows(x);
        for b in 0..2 {
            let p = sigmoid(y[(b, 0)]);
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let model = BoneProbModel::init(8, 3);
        let x = arr2(&[
            [0.1, -0.2, 0.3, 0.0, 0.5, -0.5, 0.2, 0.1, 0.0, -0.1, 0.4, 0.2, 0.3, 0.25, 0.2],
            [-0.3, 0.1, 0.0, 0.2, -0.4, 0.1, 0.0, 0.3, 0.2, 0.1, -0.2, 0.0, 0.15, 0.1, 0.05],
        ]);
        // Loss: sum of squares of the logits.
        let loss = |params: &[f64]| -> f64 {
            let (y, _) = model.forward_rows_with(params, x.clone());
            y.iter().map(|v| v * v).sum()
        };
        let (y, cache) = model.forward_rows(x.clone());
        let dlogits = y.mapv(|v| 2.0 * v);
        let grads = model.backward_rows(&cache, &dlogits);

        let h = 1e-6;
        for idx in [0usize, 5, 40, 100, grads.len() - 1, grads.len() - 3] {
            let mut p = model.params.clone();
            p[idx] += h;
            let up = loss(&p);
            p[idx] -= 2.0 * h;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * h);
            let denom = grads[idx].abs().max(fd.abs()).max(1e-8);
            assert!(
                (grads[idx] - fd).abs() / denom < 1e-5,
                "param {idx}: analytic {} vs fd {}",
                grads[idx],
                fd
            );
        }
    }

    #[test]
    fn single_selected_bone_gets_weight_one() {
        let selection = BoneSelection {
            probabilities: vec![vec![0.9, 0.1]],
            selected: vec![vec![0]],
            weight_logits: vec![vec![1.0, -1.0]],
        };
        let bones = vec![
            Bone { joint: 1, parent: 0 },
            Bone { joint: 2, parent: 1 },
        ];
        let w = predict_skin_weights(&selection, &bones, &SkinningHead::SoftmaxLogits).unwrap();
        assert_eq!(w.per_vertex[0], vec![(1, 1.0)]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let selection = BoneSelection {
            probabilities: vec![vec![0.9, 0.8, 0.1]],
            selected: vec![vec![0, 1, 2]],
            weight_logits: vec![vec![2.0, 1.0, -3.0]],
        };
        let bones = vec![
            Bone { joint: 1, parent: 0 },
            Bone { joint: 2, parent: 1 },
            Bone { joint: 3, parent: 1 },
        ];
        let w = predict_skin_weights(&selection, &bones, &SkinningHead::SoftmaxLogits).unwrap();
        let sum: f64 = w.per_vertex[0].iter().map(|&(_, w)| w).sum();
        assert!((sum - 1.0).abs() < 1e-5);
        assert!(w.validate(4).is_ok());
    }

    #[test]
    fn oracle_head_reproduces_ground_truth_on_its_support() {
        let gt = SkinWeights { per_vertex: vec![vec![(1, 0.25), (2, 0.75)]] };
        let selection = BoneSelection {
            probabilities: vec![vec![0.9, 0.8, 0.7]],
            selected: vec![vec![0, 1, 2]],
            weight_logits: vec![vec![0.0, 0.0, 0.0]],
        };
        let bones = vec![
            Bone { joint: 1, parent: 0 },
            Bone { joint: 2, parent: 1 },
            Bone { joint: 3, parent: 1 },
        ];
        let w =
            predict_skin_weights(&selection, &bones, &SkinningHead::OracleRestrict(&gt)).unwrap();
        assert_eq!(w.per_vertex[0], vec![(1, 0.25), (2, 0.75)]);
    }
}
