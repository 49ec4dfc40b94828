//! Flat parameter store with named slices.
//!
//! Every tensor lives in one contiguous `Vec<f64>` so optimizers, gradient
//! buffers, and the finite-difference checker all operate on plain slices;
//! named views expose the tensors to the forward/backward code.

use super::{ModelConfig, ModelError};
use crate::model::condition::CONDITION_FEATURE_DIM;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    offset: usize,
    rows: usize,
    cols: usize,
}

/// Names, shapes, and offsets of every parameter tensor; derived
/// deterministically from a [`ModelConfig`].
#[derive(Debug, Clone)]
pub struct Layout {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    total: usize,
}

impl Layout {
    pub fn for_config(cfg: &ModelConfig) -> Layout {
        let d = cfg.width;
        let f = cfg.mlp_hidden();
        let mut b = LayoutBuilder::default();

        b.add("cond.point_w", d, CONDITION_FEATURE_DIM);
        b.add("cond.point_b", d, 1);
        b.add("cond.out_w", d, d + 6);
        b.add("cond.out_b", d, 1);

        b.add("embed.token", cfg.vocab, d);
        b.add("embed.pos", cfg.context, d);
        b.add("embed.level", cfg.level_table, d);

        for i in 0..cfg.layers {
            for (part, rows, cols) in [
                ("ln1.g", d, 1),
                ("ln1.b", d, 1),
                ("attn.wq", d, d),
                ("attn.wk", d, d),
                ("attn.wv", d, d),
                ("attn.wo", d, d),
                ("attn.bq", d, 1),
                ("attn.bk", d, 1),
                ("attn.bv", d, 1),
                ("attn.bo", d, 1),
                ("ln2.g", d, 1),
                ("ln2.b", d, 1),
                ("xattn.wq", d, d),
                ("xattn.wk", d, d),
                ("xattn.wv", d, d),
                ("xattn.wo", d, d),
                ("xattn.bq", d, 1),
                ("xattn.bk", d, 1),
                ("xattn.bv", d, 1),
                ("xattn.bo", d, 1),
                ("ln3.g", d, 1),
                ("ln3.b", d, 1),
                ("mlp.w1", f, d),
                ("mlp.b1", f, 1),
                ("mlp.w2", d, f),
                ("mlp.b2", d, 1),
            ] {
                b.add(&format!("b{i}.{part}"), rows, cols);
            }
        }
        b.add("final_ln.g", d, 1);
        b.add("final_ln.b", d, 1);
        b.add("head.w", cfg.vocab, d);
        b.add("head.b", cfg.vocab, 1);
        b.build()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn range(&self, name: &str) -> Range<usize> {
        let e = &self.entries[self.index[name]];
        e.offset..e.offset + e.rows * e.cols
    }

    pub fn shape(&self, name: &str) -> (usize, usize) {
        let e = &self.entries[self.index[name]];
        (e.rows, e.cols)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Matrix view over an arbitrary buffer with this layout.
    pub fn mat<'a>(&self, data: &'a [f64], name: &str) -> ArrayView2<'a, f64> {
        let e = &self.entries[self.index[name]];
        ArrayView2::from_shape((e.rows, e.cols), &data[e.offset..e.offset + e.rows * e.cols])
            .expect("layout shape")
    }

    pub fn mat_mut<'a>(&self, data: &'a mut [f64], name: &str) -> ArrayViewMut2<'a, f64> {
        let e = &self.entries[self.index[name]];
        ArrayViewMut2::from_shape((e.rows, e.cols), &mut data[e.offset..e.offset + e.rows * e.cols])
            .expect("layout shape")
    }

    pub fn vec<'a>(&self, data: &'a [f64], name: &str) -> &'a [f64] {
        &data[self.range(name)]
    }

    pub fn vec_mut<'a>(&self, data: &'a mut [f64], name: &str) -> &'a mut [f64] {
        let r = self.range(name);
        &mut data[r]
    }
}

#[derive(Default)]
struct LayoutBuilder {
    entries: Vec<Entry>,
    total: usize,
}

impl LayoutBuilder {
    fn add(&mut self, name: &str, rows: usize, cols: usize) {
        self.entries.push(Entry { name: name.to_string(), offset: self.total, rows, cols });
        self.total += rows * cols;
    }

    fn build(self) -> Layout {
        let index = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), i))
            .collect();
        Layout { entries: self.entries, index, total: self.total }
    }
}

/// Model parameters: a flat f64 store plus its layout.
#[derive(Debug, Clone)]
pub struct Parameters {
    pub layout: Arc<Layout>,
    pub data: Vec<f64>,
}

impl Parameters {
    /// Deterministic initialization: N(0, 0.02) weights, zero biases,
    /// layer-norm gains 1.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Parameters, ModelError> {
        cfg.validate()?;
        let layout = Arc::new(Layout::for_config(cfg));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0f64; layout.total()];
        let is_bias = |name: &str| {
            [".b", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2", "_b"]
                .iter()
                .any(|s| name.ends_with(s))
        };
        for name in layout.names() {
            let range = layout.range(name);
            if name.ends_with(".g") {
                data[range].fill(1.0);
            } else if is_bias(name) {
                // biases stay zero
            } else {
                for p in data[range].iter_mut() {
                    *p = gaussian(&mut rng) * 0.02;
                }
            }
        }
        Ok(Parameters { layout, data })
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    pub fn mat(&self, name: &str) -> ArrayView2<'_, f64> {
        self.layout.mat(&self.data, name)
    }

    pub fn vec(&self, name: &str) -> &[f64] {
        self.layout.vec(&self.data, name)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous_and_complete() {
        let cfg = ModelConfig::tiny(260);
        let layout = Layout::for_config(&cfg);
        let mut covered = 0usize;
        for name in layout.names() {
            let r = layout.range(name);
            assert_eq!(r.start, covered, "gap before {name}");
            covered = r.end;
        }
        assert_eq!(covered, layout.total());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = ModelConfig::tiny(260);
        let a = Parameters::init(&cfg, 42).unwrap();
        let b = Parameters::init(&cfg, 42).unwrap();
        let c = Parameters::init(&cfg, 43).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
        assert!(a.data.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn layernorm_gains_start_at_one() {
        let cfg = ModelConfig::tiny(260);
        let p = Parameters::init(&cfg, 0).unwrap();
        assert!(p.vec("b0.ln1.g").iter().all(|&x| x == 1.0));
        assert!(p.vec("b0.ln1.b").iter().all(|&x| x == 0.0));
        assert!(p.vec("b0.attn.bq").iter().all(|&x| x == 0.0));
    }
}
