//! Decoder forward/backward passes and the sequence losses.
//!
//! Pre-norm blocks: causal multi-head self-attention, cross-attention over
//! the condition tokens, then a GELU MLP, each with a residual connection.
//! Token, absolute-position, and level embeddings are summed at the input.
//! Backward passes are hand-written and verified by central differences.

use super::condition::{condition_backward, condition_forward, ConditionCache};
use super::{ModelConfig, ModelError, Parameters};
use ndarray::{s, Array2};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

fn gelu_prime(u: f64) -> f64 {
    let t = GELU_C * (u + 0.044715 * u * u * u);
    let th = t.tanh();
    0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

/// `x · W^T + b` row-wise.
fn affine(x: &Array2<f64>, w: ndarray::ArrayView2<f64>, b: &[f64]) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    for mut row in y.rows_mut() {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
    y
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

fn layernorm_forward(x: &Array2<f64>, g: &[f64], b: &[f64]) -> (Array2<f64>, LnCache) {
    let d = x.ncols();
    let mut out = Array2::zeros(x.raw_dim());
    let mut xhat = Array2::zeros(x.raw_dim());
    let mut inv_std = Vec::with_capacity(x.nrows());
    for (i, row) in x.rows().into_iter().enumerate() {
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(inv);
        for j in 0..d {
            let xh = (row[j] - mean) * inv;
            xhat[(i, j)] = xh;
            out[(i, j)] = g[j] * xh + b[j];
        }
    }
    (out, LnCache { xhat, inv_std })
}

/// Returns dx; accumulates dg/db.
fn layernorm_backward(
    dout: &Array2<f64>,
    cache: &LnCache,
    g: &[f64],
    dg: &mut [f64],
    db: &mut [f64],
) -> Array2<f64> {
    let d = dout.ncols() as f64;
    let mut dx = Array2::zeros(dout.raw_dim());
    for i in 0..dout.nrows() {
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..dout.ncols() {
            let dy = dout[(i, j)];
            let xh = cache.xhat[(i, j)];
            dg[j] += dy * xh;
            db[j] += dy;
            let dxhat = dy * g[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xh;
        }
        mean_dxhat /= d;
        mean_dxhat_xhat /= d;
        let inv = cache.inv_std[i];
        for j in 0..dout.ncols() {
            let dxhat = dout[(i, j)] * g[j];
            dx[(i, j)] = inv * (dxhat - mean_dxhat - cache.xhat[(i, j)] * mean_dxhat_xhat);
        }
    }
    dx
}

struct BlockTrace {
    ln1: LnCache,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    att: Vec<Array2<f64>>, // per head [T x T]
    ctx: Array2<f64>,
    x_mid1: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    q2: Array2<f64>,
    k2: Array2<f64>,
    v2: Array2<f64>,
    att2: Vec<Array2<f64>>, // per head [T x m]
    ctx2: Array2<f64>,
    x_mid2: Array2<f64>,
    ln3: LnCache,
    h3: Array2<f64>,
    mlp_u: Array2<f64>,
    mlp_a: Array2<f64>,
}

/// Everything needed to run the backward pass.
pub struct ForwardTrace {
    ids: Vec<u32>,
    levels: Vec<u32>,
    h1s: Vec<Array2<f64>>, // ln1 outputs per block (attention input)
    blocks: Vec<BlockTrace>,
    final_ln: LnCache,
    final_y: Array2<f64>,
    condition: Array2<f64>,
}

fn softmax_rows_masked(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp(); // exp(-inf) = 0 under the mask
            sum += *v;
        }
        if sum > 0.0 {
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
    }
}

/// Softmax Jacobian-vector product per row: `ds = A ⊙ (dA - Σ dA⊙A)`.
fn softmax_backward(datt: &Array2<f64>, att: &Array2<f64>) -> Array2<f64> {
    let mut ds = Array2::zeros(att.raw_dim());
    for i in 0..att.nrows() {
        let mut dot = 0.0;
        for j in 0..att.ncols() {
            dot += datt[(i, j)] * att[(i, j)];
        }
        for j in 0..att.ncols() {
            ds[(i, j)] = att[(i, j)] * (datt[(i, j)] - dot);
        }
    }
    ds
}

/// Runs the decoder over one sequence; logits at position t depend only on
/// positions <= t, their level indices, and the condition.
pub fn forward_logits(
    cfg: &ModelConfig,
    params: &Parameters,
    ids: &[u32],
    levels: &[u32],
    condition: &Array2<f64>,
) -> Result<(Array2<f64>, ForwardTrace), ModelError> {
    let t = ids.len();
    if t == 0 {
        return Err(ModelError::Domain("empty input sequence".into()));
    }
    if t > cfg.context {
        return Err(ModelError::Context(format!(
            "sequence length {t} exceeds context {}",
            cfg.context
        )));
    }
    if levels.len() != t {
        return Err(ModelError::Domain("level/token length mismatch".into()));
    }
    if let Some(&bad) = ids.iter().find(|&&i| i as usize >= cfg.vocab) {
        return Err(ModelError::Domain(format!("token id {bad} out of vocabulary")));
    }
    if condition.shape() != [cfg.condition_tokens, cfg.width] {
        return Err(ModelError::Domain(format!(
            "condition shape {:?} != [{}, {}]",
            condition.shape(),
            cfg.condition_tokens,
            cfg.width
        )));
    }

    let d = cfg.width;
    let heads = cfg.heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let tok_e = params.mat("embed.token");
    let pos_e = params.mat("embed.pos");
    let lvl_e = params.mat("embed.level");

    let clamped: Vec<u32> = levels
        .iter()
        .map(|&l| l.min(cfg.level_table as u32 - 1))
        .collect();
    let mut x = Array2::zeros((t, d));
    for (i, (&id, &lvl)) in ids.iter().zip(&clamped).enumerate() {
        for j in 0..d {
            x[(i, j)] = tok_e[(id as usize, j)] + pos_e[(i, j)] + lvl_e[(lvl as usize, j)];
        }
    }

    let mut h1s = Vec::with_capacity(cfg.layers);
    let mut blocks = Vec::with_capacity(cfg.layers);
    for b in 0..cfg.layers {
        let name = |p: &str| format!("b{b}.{p}");

        // Causal self-attention.
        let (h1, ln1) = layernorm_forward(&x, params.vec(&name("ln1.g")), params.vec(&name("ln1.b")));
        let q = affine(&h1, params.mat(&name("attn.wq")), params.vec(&name("attn.bq")));
        let k = affine(&h1, params.mat(&name("attn.wk")), params.vec(&name("attn.bk")));
        let v = affine(&h1, params.mat(&name("attn.wv")), params.vec(&name("attn.bv")));
        let mut ctx = Array2::zeros((t, d));
        let mut att = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let mut scores = qh.dot(&kh.t());
            scores *= scale;
            for i in 0..t {
                for j in i + 1..t {
                    scores[(i, j)] = f64::NEG_INFINITY;
                }
            }
            softmax_rows_masked(&mut scores);
            let ctx_h = scores.dot(&vh);
            ctx.slice_mut(cols).assign(&ctx_h);
            att.push(scores);
        }
        let attn_out = affine(&ctx, params.mat(&name("attn.wo")), params.vec(&name("attn.bo")));
        let x_mid1 = &x + &attn_out;

        // Cross-attention to the condition tokens.
        let (h2, ln2) =
            layernorm_forward(&x_mid1, params.vec(&name("ln2.g")), params.vec(&name("ln2.b")));
        let q2 = affine(&h2, params.mat(&name("xattn.wq")), params.vec(&name("xattn.bq")));
        let k2 = affine(condition, params.mat(&name("xattn.wk")), params.vec(&name("xattn.bk")));
        let v2 = affine(condition, params.mat(&name("xattn.wv")), params.vec(&name("xattn.bv")));
        let mut ctx2 = Array2::zeros((t, d));
        let mut att2 = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = q2.slice(cols);
            let kh = k2.slice(cols);
            let vh = v2.slice(cols);
            let mut scores = qh.dot(&kh.t());
            scores *= scale;
            softmax_rows_masked(&mut scores);
            let ctx_h = scores.dot(&vh);
            ctx2.slice_mut(cols).assign(&ctx_h);
            att2.push(scores);
        }
        let xattn_out = affine(&ctx2, params.mat(&name("xattn.wo")), params.vec(&name("xattn.bo")));
        let x_mid2 = &x_mid1 + &xattn_out;

        // MLP.
        let (h3, ln3) =
            layernorm_forward(&x_mid2, params.vec(&name("ln3.g")), params.vec(&name("ln3.b")));
        let mlp_u = affine(&h3, params.mat(&name("mlp.w1")), params.vec(&name("mlp.b1")));
        let mlp_a = mlp_u.mapv(gelu);
        let mlp_out = affine(&mlp_a, params.mat(&name("mlp.w2")), params.vec(&name("mlp.b2")));
        let x_out = &x_mid2 + &mlp_out;

        h1s.push(h1);
        blocks.push(BlockTrace {
            ln1, q, k, v, att, ctx, x_mid1, ln2, h2, q2, k2, v2, att2, ctx2, x_mid2, ln3, h3,
            mlp_u, mlp_a,
        });
        x = x_out;
    }

    let (y, final_ln) =
        layernorm_forward(&x, params.vec("final_ln.g"), params.vec("final_ln.b"));
    let logits = affine(&y, params.mat("head.w"), params.vec("head.b"));
    let trace = ForwardTrace {
        ids: ids.to_vec(),
        levels: clamped,
        h1s,
        blocks,
        final_ln,
        final_y: y,
        condition: condition.clone(),
    };
    Ok((logits, trace))
}

/// Accumulates parameter gradients for `d loss / d logits` and returns
/// `d loss / d condition`.
pub fn backward_logits(
    cfg: &ModelConfig,
    params: &Parameters,
    trace: &ForwardTrace,
    dlogits: &Array2<f64>,
    grads: &mut [f64],
) -> Array2<f64> {
    let layout = params.layout.clone();
    let t = trace.ids.len();
    let d = cfg.width;
    let heads = cfg.heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    // Head.
    {
        let dw = dlogits.t().dot(&trace.final_y);
        let mut g = layout.mat_mut(grads, "head.w");
        g += &dw;
        let gb = layout.vec_mut(grads, "head.b");
        for (j, gbj) in gb.iter_mut().enumerate() {
            *gbj += dlogits.column(j).sum();
        }
    }
    let dy = dlogits.dot(&params.mat("head.w"));
    let mut dx = {
        let (dg, dbr) = (layout.range("final_ln.g"), layout.range("final_ln.b"));
        let (gslice, bslice) = split_two(grads, dg, dbr);
        layernorm_backward(&dy, &trace.final_ln, params.vec("final_ln.g"), gslice, bslice)
    };

    let mut dcond = Array2::zeros((cfg.condition_tokens, d));

    for b in (0..cfg.layers).rev() {
        let name = |p: &str| format!("b{b}.{p}");
        let bt = &trace.blocks[b];

        // MLP backward.
        let dmlp_out = dx.clone(); // residual: dx flows to both branches
        {
            let dw2 = dmlp_out.t().dot(&bt.mlp_a);
            let mut g = layout.mat_mut(grads, &name("mlp.w2"));
            g += &dw2;
            let gb = layout.vec_mut(grads, &name("mlp.b2"));
            for (j, gbj) in gb.iter_mut().enumerate() {
                *gbj += dmlp_out.column(j).sum();
            }
        }
        let mut du = dmlp_out.dot(&params.mat(&name("mlp.w2")));
        ndarray::Zip::from(&mut du).and(&bt.mlp_u).for_each(|g, &u| *g *= gelu_prime(u));
        {
            let dw1 = du.t().dot(&bt.h3);
            let mut g = layout.mat_mut(grads, &name("mlp.w1"));
            g += &dw1;
            let gb = layout.vec_mut(grads, &name("mlp.b1"));
            for (j, gbj) in gb.iter_mut().enumerate() {
                *gbj += du.column(j).sum();
            }
        }
        let dh3 = du.dot(&params.mat(&name("mlp.w1")));
        let dx_mid2_from_ln = {
            let (dgr, dbr) = (layout.range(&name("ln3.g")), layout.range(&name("ln3.b")));
            let (gs, bs) = split_two(grads, dgr, dbr);
            layernorm_backward(&dh3, &bt.ln3, params.vec(&name("ln3.g")), gs, bs)
        };
        let dx_mid2 = &dx + &dx_mid2_from_ln;

        // Cross-attention backward.
        let dxattn_out = dx_mid2.clone();
        {
            let dwo = dxattn_out.t().dot(&bt.ctx2);
            let mut g = layout.mat_mut(grads, &name("xattn.wo"));
            g += &dwo;
            let gb = layout.vec_mut(grads, &name("xattn.bo"));
            for (j, gbj) in gb.iter_mut().enumerate() {
                *gbj += dxattn_out.column(j).sum();
            }
        }
        let dctx2 = dxattn_out.dot(&params.mat(&name("xattn.wo")));
        let mut dq2: Array2<f64> = Array2::zeros((t, d));
        let mut dk2: Array2<f64> = Array2::zeros((cfg.condition_tokens, d));
        let mut dv2: Array2<f64> = Array2::zeros((cfg.condition_tokens, d));
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let datt = dctx2.slice(cols).dot(&bt.v2.slice(cols).t());
            dv2.slice_mut(cols)
                .assign(&bt.att2[h].t().dot(&dctx2.slice(cols)));
            let mut ds = softmax_backward(&datt, &bt.att2[h]);
            ds *= scale;
            dq2.slice_mut(cols).assign(&ds.dot(&bt.k2.slice(cols)));
            dk2.slice_mut(cols).assign(&ds.t().dot(&bt.q2.slice(cols)));
        }
        let dh2 = linear_backward(params, &layout, grads, &name("xattn.wq"), &name("xattn.bq"), &dq2, &bt.h2);
        dcond += &linear_backward(params, &layout, grads, &name("xattn.wk"), &name("xattn.bk"), &dk2, &trace.condition);
        dcond += &linear_backward(params, &layout, grads, &name("xattn.wv"), &name("xattn.bv"), &dv2, &trace.condition);
        let dx_mid1_from_ln = {
            let (dgr, dbr) = (layout.range(&name("ln2.g")), layout.range(&name("ln2.b")));
            let (gs, bs) = split_two(grads, dgr, dbr);
            layernorm_backward(&dh2, &bt.ln2, params.vec(&name("ln2.g")), gs, bs)
        };
        let dx_mid1 = &dx_mid2 + &dx_mid1_from_ln;

        // Self-attention backward.
        let dattn_out = dx_mid1.clone();
        {
            let dwo = dattn_out.t().dot(&bt.ctx);
            let mut g = layout.mat_mut(grads, &name("attn.wo"));
            g += &dwo;
            let gb = layout.vec_mut(grads, &name("attn.bo"));
            for (j, gbj) in gb.iter_mut().enumerate() {
                *gbj += dattn_out.column(j).sum();
            }
        }
        let dctx = dattn_out.dot(&params.mat(&name("attn.wo")));
        let mut dq: Array2<f64> = Array2::zeros((t, d));
        let mut dk: Array2<f64> = Array2::zeros((t, d));
        let mut dv: Array2<f64> = Array2::zeros((t, d));
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let datt = dctx.slice(cols).dot(&bt.v.slice(cols).t());
            dv.slice_mut(cols)
                .assign(&bt.att[h].t().dot(&dctx.slice(cols)));
            let mut ds = softmax_backward(&datt, &bt.att[h]);
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&bt.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&bt.q.slice(cols)));
        }
        let h1 = &trace.h1s[b];
        let mut dh1 = linear_backward(params, &layout, grads, &name("attn.wq"), &name("attn.bq"), &dq, h1);
        dh1 += &linear_backward(params, &layout, grads, &name("attn.wk"), &name("attn.bk"), &dk, h1);
        dh1 += &linear_backward(params, &layout, grads, &name("attn.wv"), &name("attn.bv"), &dv, h1);
        let dx_in_from_ln = {
            let (dgr, dbr) = (layout.range(&name("ln1.g")), layout.range(&name("ln1.b")));
            let (gs, bs) = split_two(grads, dgr, dbr);
            layernorm_backward(&dh1, &bt.ln1, params.vec(&name("ln1.g")), gs, bs)
        };
        dx = &dx_mid1 + &dx_in_from_ln;
    }

    // Embedding gradients.
    {
        let tok_range = layout.range("embed.token");
        let pos_range = layout.range("embed.pos");
        let lvl_range = layout.range("embed.level");
        for (i, (&id, &lvl)) in trace.ids.iter().zip(&trace.levels).enumerate() {
            for j in 0..d {
                grads[tok_range.start + id as usize * d + j] += dx[(i, j)];
                grads[pos_range.start + i * d + j] += dx[(i, j)];
                grads[lvl_range.start + lvl as usize * d + j] += dx[(i, j)];
            }
        }
    }
    dcond
}

/// dW += dy^T·x, db += colsum(dy); returns dx = dy·W.
fn linear_backward(
    params: &Parameters,
    layout: &super::Layout,
    grads: &mut [f64],
    wname: &str,
    bname: &str,
    dy: &Array2<f64>,
    x: &Array2<f64>,
) -> Array2<f64> {
    {
        let dw = dy.t().dot(x);
        let mut g = layout.mat_mut(grads, wname);
        g += &dw;
        let gb = layout.vec_mut(grads, bname);
        for (j, gbj) in gb.iter_mut().enumerate() {
            *gbj += dy.column(j).sum();
        }
    }
    dy.dot(&params.mat(wname))
}

fn split_two(
    grads: &mut [f64],
    a: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
) -> (&mut [f64], &mut [f64]) {
    // Layout allocates `.g` immediately before `.b`.
    assert!(a.end <= b.start);
    let (left, right) = grads.split_at_mut(b.start);
    (&mut left[a], &mut right[..b.end - b.start])
}

fn log_softmax_row(row: ndarray::ArrayView1<f64>) -> (f64, Vec<f64>) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let exps: Vec<f64> = row.iter().map(|&v| {
        let e = (v - max).exp();
        sum += e;
        e
    }).collect();
    (max + sum.ln(), exps.into_iter().map(|e| e / sum).collect())
}

/// Mean negative log-likelihood of tokens 1..T given their prefixes; the
/// sequence must include BOS and EOS.
pub fn next_token_loss(
    cfg: &ModelConfig,
    params: &Parameters,
    ids: &[u32],
    levels: &[u32],
    cond: &ConditionCache,
) -> Result<f64, ModelError> {
    next_token_loss_inner(cfg, params, ids, levels, cond, None, &mut [])
}

/// As [`next_token_loss`], also accumulating `scale * gradient` into `grads`.
pub fn next_token_loss_and_grad(
    cfg: &ModelConfig,
    params: &Parameters,
    ids: &[u32],
    levels: &[u32],
    cond: &ConditionCache,
    scale: f64,
    grads: &mut [f64],
) -> Result<f64, ModelError> {
    next_token_loss_inner(cfg, params, ids, levels, cond, Some(scale), grads)
}

fn next_token_loss_inner(
    cfg: &ModelConfig,
    params: &Parameters,
    ids: &[u32],
    levels: &[u32],
    cond: &ConditionCache,
    grad_scale: Option<f64>,
    grads: &mut [f64],
) -> Result<f64, ModelError> {
    if ids.len() < 2 {
        return Err(ModelError::Domain("sequence too short for next-token loss".into()));
    }
    let t_pred = ids.len() - 1;
    let (cond_tokens, cond_trace) = condition_forward(params, cond);
    let (logits, trace) =
        forward_logits(cfg, params, &ids[..t_pred], &levels[..t_pred], &cond_tokens)?;

    let mut loss = 0.0;
    let mut dlogits = grad_scale.map(|_| Array2::zeros(logits.raw_dim()));
    for i in 0..t_pred {
        let target = ids[i + 1] as usize;
        let (lse, probs) = log_softmax_row(logits.row(i));
        loss += lse - logits[(i, target)];
        if let Some(dl) = dlogits.as_mut() {
            let scale = grad_scale.unwrap() / t_pred as f64;
            for (j, p) in probs.iter().enumerate() {
                dl[(i, j)] = scale * (p - f64::from(j == target));
            }
        }
    }
    loss /= t_pred as f64;

    if let Some(dl) = dlogits {
        let dcond = backward_logits(cfg, params, &trace, &dl, grads);
        condition_backward(params, cond, &cond_trace, &dcond, grads);
    }
    Ok(loss)
}

/// Total `log π(sequence | condition)`: the sum of per-token log-probs.
/// Equals `-next_token_loss * (len - 1)`.
pub fn sequence_logprob(
    cfg: &ModelConfig,
    params: &Parameters,
    ids: &[u32],
    levels: &[u32],
    cond: &ConditionCache,
) -> Result<f64, ModelError> {
    let loss = next_token_loss(cfg, params, ids, levels, cond)?;
    Ok(-loss * (ids.len() - 1) as f64)
}

/// Adds `coeff * d log π / d params` to `grads` and returns the logprob.
pub fn sequence_logprob_and_grad(
    cfg: &ModelConfig,
    params: &Parameters,
    ids: &[u32],
    levels: &[u32],
    cond: &ConditionCache,
    coeff: f64,
    grads: &mut [f64],
) -> Result<f64, ModelError> {
    let t_pred = ids.len() - 1;
    // d logprob = -t_pred * d mean-NLL.
    let loss =
        next_token_loss_inner(cfg, params, ids, levels, cond, Some(-coeff * t_pred as f64), grads)?;
    Ok(-loss * t_pred as f64)
}
