//! Point-cloud shape conditioning.
//!
//! A lightweight learned stand-in for a pretrained shape encoder: farthest-
//! point-sampled anchors each pool a Gaussian-weighted neighborhood of
//! support points through a learned per-point projection, then project to one
//! condition token per anchor. Anchor selection and pooling weights are
//! purely geometric (and permutation-invariant); only the projections carry
//! parameters, so per-asset geometry can be cached across training steps.

use super::{ModelError, Parameters};
use nalgebra::Vector3;
use ndarray::{Array1, Array2};

/// Per-point features pooled by each anchor: offset (3), normal (3),
/// distance (1).
pub const CONDITION_FEATURE_DIM: usize = 7;

/// Gaussian pooling bandwidth in normalized units.
const POOL_SIGMA: f64 = 0.2;

/// Geometry-only conditioning state for one asset.
#[derive(Debug, Clone)]
pub struct ConditionCache {
    pub anchors: Vec<Vector3<f64>>,
    pub anchor_normals: Vec<Vector3<f64>>,
    /// Per anchor: `[support x 7]` point features.
    pub point_feats: Vec<Array2<f64>>,
    /// Per anchor: normalized Gaussian pooling weights over support points.
    pub pool_weights: Vec<Array1<f64>>,
}

/// Activations kept for the encoder backward pass.
pub struct ConditionTrace {
    /// Per anchor: post-ReLU point features `[support x D]`.
    post_relu: Vec<Array2<f64>>,
    /// Per anchor: concatenated `[pooled; anchor; normal]` input to the
    /// output projection.
    cat: Vec<Vec<f64>>,
}

/// Farthest point sampling, geometric and permutation-invariant: starts at
/// the lexicographically smallest point; ties in the max-min-distance step
/// break toward the lexicographically smaller point.
fn farthest_point_indices(points: &[Vector3<f64>], count: usize) -> Vec<usize> {
    let lex = |a: &Vector3<f64>, b: &Vector3<f64>| {
        a.x.total_cmp(&b.x)
            .then(a.y.total_cmp(&b.y))
            .then(a.z.total_cmp(&b.z))
    };
    let start = (0..points.len())
        .min_by(|&a, &b| lex(&points[a], &points[b]))
        .expect("nonempty point set");

    let mut chosen = vec![start];
    let mut min_dist: Vec<f64> = points
        .iter()
        .map(|p| (p - points[start]).norm_squared())
        .collect();
    while chosen.len() < count.min(points.len()) {
        let mut best = usize::MAX;
        for i in 0..points.len() {
            if min_dist[i] <= 0.0 {
                continue;
            }
            if best == usize::MAX
                || min_dist[i] > min_dist[best]
                || (min_dist[i] == min_dist[best] && lex(&points[i], &points[best]).is_lt())
            {
                best = i;
            }
        }
        if best == usize::MAX {
            break; // all remaining points are duplicates
        }
        chosen.push(best);
        for i in 0..points.len() {
            min_dist[i] = min_dist[i].min((points[i] - points[best]).norm_squared());
        }
    }
    chosen
}

/// Precomputes anchors, support features, and pooling weights for one point
/// cloud. Requires at least `condition_tokens` points.
pub fn build_condition_cache(
    points: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    cfg: &super::ModelConfig,
) -> Result<ConditionCache, ModelError> {
    if points.is_empty() {
        return Err(ModelError::Domain("empty point cloud".into()));
    }
    if points.len() < cfg.condition_tokens {
        return Err(ModelError::Domain(format!(
            "{} points cannot seed {} condition tokens",
            points.len(),
            cfg.condition_tokens
        )));
    }
    if normals.len() != points.len() {
        return Err(ModelError::Domain("normal/point count mismatch".into()));
    }

    // One FPS run; its prefix is the anchor set, the whole run the support set.
    let support_idx = farthest_point_indices(points, cfg.condition_points);
    let anchor_idx = &support_idx[..cfg.condition_tokens.min(support_idx.len())];
    if anchor_idx.len() < cfg.condition_tokens {
        return Err(ModelError::Domain(
            "too few distinct points for the requested condition tokens".into(),
        ));
    }

    let mut anchors = Vec::with_capacity(anchor_idx.len());
    let mut anchor_normals = Vec::with_capacity(anchor_idx.len());
    let mut point_feats = Vec::with_capacity(anchor_idx.len());
    let mut pool_weights = Vec::with_capacity(anchor_idx.len());
    for &ai in anchor_idx {
        let a = points[ai];
        let mut feats = Array2::zeros((support_idx.len(), CONDITION_FEATURE_DIM));
        let mut w = Array1::zeros(support_idx.len());
        for (row, &si) in support_idx.iter().enumerate() {
            let off = points[si] - a;
            let n = normals[si];
            let d = off.norm();
            for (c, val) in [off.x, off.y, off.z, n.x, n.y, n.z, d].into_iter().enumerate() {
                feats[(row, c)] = val;
            }
            w[row] = (-d * d / (2.0 * POOL_SIGMA * POOL_SIGMA)).exp();
        }
        let sum = w.sum();
        if sum > 0.0 {
            w /= sum;
        }
        anchors.push(a);
        anchor_normals.push(normals[ai]);
        point_feats.push(feats);
        pool_weights.push(w);
    }
    Ok(ConditionCache { anchors, anchor_normals, point_feats, pool_weights })
}

/// Runs the learned projections over a cache: one `width`-dim token per
/// anchor.
pub fn condition_forward(
    params: &Parameters,
    cache: &ConditionCache,
) -> (Array2<f64>, ConditionTrace) {
    let point_w = params.mat("cond.point_w"); // [D x 7]
    let point_b = params.vec("cond.point_b");
    let out_w = params.mat("cond.out_w"); // [D x (D+6)]
    let out_b = params.vec("cond.out_b");
    let d = point_w.nrows();

    let m = cache.anchors.len();
    let mut tokens = Array2::zeros((m, d));
    let mut post_relu = Vec::with_capacity(m);
    let mut cats = Vec::with_capacity(m);
    for i in 0..m {
        let mut f = cache.point_feats[i].dot(&point_w.t()); // [support x D]
        for mut row in f.rows_mut() {
            for (v, b) in row.iter_mut().zip(point_b) {
                *v = (*v + b).max(0.0);
            }
        }
        let pooled = cache.pool_weights[i].dot(&f); // [D]

        let mut cat = Vec::with_capacity(d + 6);
        cat.extend(pooled.iter());
        let a = cache.anchors[i];
        let n = cache.anchor_normals[i];
        cat.extend([a.x, a.y, a.z, n.x, n.y, n.z]);

        for (k, out) in tokens.row_mut(i).iter_mut().enumerate() {
            let mut acc = out_b[k];
            for (j, c) in cat.iter().enumerate() {
                acc += out_w[(k, j)] * c;
            }
            *out = acc;
        }
        post_relu.push(f);
        cats.push(cat);
    }
    (tokens, ConditionTrace { post_relu, cat: cats })
}

/// Accumulates encoder parameter gradients given `d loss / d tokens`.
pub fn condition_backward(
    params: &Parameters,
    cache: &ConditionCache,
    trace: &ConditionTrace,
    d_tokens: &Array2<f64>,
    grads: &mut [f64],
) {
    let layout = params.layout.clone();
    let out_w = params.mat("cond.out_w");
    let d = out_w.nrows();

    for i in 0..cache.anchors.len() {
        let dt = d_tokens.row(i); // [D]
        {
            let mut g_out_w = layout.mat_mut(grads, "cond.out_w");
            for k in 0..d {
                for (j, c) in trace.cat[i].iter().enumerate() {
                    g_out_w[(k, j)] += dt[k] * c;
                }
            }
        }
        {
            let g_out_b = layout.vec_mut(grads, "cond.out_b");
            for k in 0..d {
                g_out_b[k] += dt[k];
            }
        }

        // d pooled = out_w[:, :D]^T · dt
        let mut d_pooled = vec![0.0f64; d];
        for (j, dp) in d_pooled.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..d {
                acc += out_w[(k, j)] * dt[k];
            }
            *dp = acc;
        }

        // d f = alpha ⊗ d pooled, gated by the ReLU mask.
        let f = &trace.post_relu[i];
        let alpha = &cache.pool_weights[i];
        let feats = &cache.point_feats[i];
        let mut g_point_w = layout.mat_mut(grads, "cond.point_w");
        let mut g_point_b = vec![0.0f64; d];
        for r in 0..f.nrows() {
            let a = alpha[r];
            if a == 0.0 {
                continue;
            }
            for k in 0..d {
                if f[(r, k)] > 0.0 {
                    let df = a * d_pooled[k];
                    g_point_b[k] += df;
                    for c in 0..CONDITION_FEATURE_DIM {
                        g_point_w[(k, c)] += df * feats[(r, c)];
                    }
                }
            }
        }
        let gb = layout.vec_mut(grads, "cond.point_b");
        for k in 0..d {
            gb[k] += g_point_b[k];
        }
    }
}

/// Convenience wrapper: cache + forward in one call.
pub fn encode_shape_condition(
    points: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    cfg: &super::ModelConfig,
    params: &Parameters,
) -> Result<Array2<f64>, ModelError> {
    let cache = build_condition_cache(points, normals, cfg)?;
    Ok(condition_forward(params, &cache).0)
}
