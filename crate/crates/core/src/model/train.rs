//! Training loops: next-token pretraining (stage 1) and reward-guided
//! preference fine-tuning against a frozen reference (stage 2). Both are
//! single-threaded and bitwise deterministic given a seed.

use super::condition::build_condition_cache;
use super::dpo::{dpo_loss_grad, DpoVariant};
use super::optim::{clip_gradients, warmup_lr, Adam};
use super::transformer::{
    next_token_loss, next_token_loss_and_grad, sequence_logprob, sequence_logprob_and_grad,
};
use super::{ConditionCache, ModelConfig, ModelError, Parameters};
use crate::derive_seed;
use crate::io::Asset;
use crate::preference::PreferencePair;
use crate::skeleton::sample_surface_points;
use crate::tokenizer::{tokenize, QuantizationSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Optimizer and loop settings shared by both stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub warmup: u64,
    pub weight_decay: f64,
    pub grad_clip: Option<f64>,
    pub beta: f64,
    pub lambda: f64,
    pub dpo_variant: DpoVariant,
    pub seed: u64,
    /// Stage 2: number of trailing pairs held out for the margin probe.
    pub holdout: usize,
    /// Stage 2: margin evaluation cadence in steps.
    pub eval_every: usize,
}

impl TrainConfig {
    /// Full-scale stage-1 defaults (Adam 5e-5, weight decay 1e-3, 1k-step
    /// linear warmup).
    pub fn stage1_defaults(seed: u64) -> Self {
        Self {
            lr: 5e-5,
            steps: 2000,
            batch: 8,
            warmup: 1000,
            weight_decay: 1e-3,
            grad_clip: Some(1.0),
            beta: 0.3,
            lambda: 1.0,
            dpo_variant: DpoVariant::Literal,
            seed,
            holdout: 0,
            eval_every: 50,
        }
    }

    /// Full-scale stage-2 defaults (lr reduced to 1e-6, λ = 1).
    pub fn stage2_defaults(seed: u64) -> Self {
        Self { lr: 1e-6, steps: 500, batch: 8, warmup: 0, ..Self::stage1_defaults(seed) }
    }

    /// Desk-scale stage-1 settings: higher learning rate and short warmup so
    /// a 4x128 model converges in minutes on one CPU core.
    pub fn toy_stage1(seed: u64) -> Self {
        Self {
            lr: 1e-3,
            steps: 800,
            batch: 4,
            warmup: 50,
            ..Self::stage1_defaults(seed)
        }
    }

    /// Desk-scale stage-2 settings.
    pub fn toy_stage2(seed: u64) -> Self {
        Self {
            lr: 2e-5,
            steps: 300,
            batch: 4,
            warmup: 0,
            holdout: 24,
            eval_every: 25,
            ..Self::stage1_defaults(seed)
        }
    }
}

/// One training sequence with its condition-cache index.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub ids: Vec<u32>,
    pub levels: Vec<u32>,
    pub cond: usize,
}

/// Tokenized corpus plus per-asset conditioning geometry.
pub struct Stage1Dataset {
    pub examples: Vec<TrainExample>,
    pub conditions: Vec<ConditionCache>,
    pub spec: QuantizationSpec,
    pub names: Vec<String>,
}

/// Tokenizes every asset and caches its sampled-point-cloud conditioning.
///
/// Trees deeper than the model's level table or longer than its context are
/// rejected at tokenization time with a clear error.
pub fn build_stage1_dataset(
    assets: &[Asset],
    cfg: &ModelConfig,
    spec: QuantizationSpec,
    points_per_asset: usize,
    seed: u64,
) -> Result<Stage1Dataset, ModelError> {
    let mut examples = Vec::with_capacity(assets.len());
    let mut conditions = Vec::with_capacity(assets.len());
    let mut names = Vec::with_capacity(assets.len());
    for (i, asset) in assets.iter().enumerate() {
        let out = tokenize(&asset.skeleton, spec)
            .map_err(|e| ModelError::Domain(format!("asset '{}': {e}", asset.name)))?;
        let seq = out.sequence;
        if seq.level_count() > cfg.level_table {
            return Err(ModelError::Domain(format!(
                "asset '{}': tree depth {} exceeds the level table ({}); rejected at tokenization",
                asset.name,
                seq.level_count(),
                cfg.level_table
            )));
        }
        if seq.tokens.len() - 1 > cfg.context {
            return Err(ModelError::Context(format!(
                "asset '{}': {} tokens exceed context {}",
                asset.name,
                seq.tokens.len(),
                cfg.context
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let (points, normals) = sample_surface_points(&asset.mesh, points_per_asset, &mut rng)
            .map_err(|e| ModelError::Domain(format!("asset '{}': {e}", asset.name)))?;
        let cache = build_condition_cache(&points, &normals, cfg)?;
        examples.push(TrainExample { ids: seq.ids(), levels: seq.level_indices.clone(), cond: i });
        conditions.push(cache);
        names.push(asset.name.clone());
    }
    Ok(Stage1Dataset { examples, conditions, spec, names })
}

/// Loss curve plus fixed-probe evaluations at the start and end of training.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub eval_initial: f64,
    pub eval_final: f64,
}

/// Mean next-token loss over the given example indices.
pub fn eval_mean_loss(
    cfg: &ModelConfig,
    params: &Parameters,
    dataset: &Stage1Dataset,
    indices: &[usize],
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for &i in indices {
        let ex = &dataset.examples[i];
        total += next_token_loss(cfg, params, &ex.ids, &ex.levels, &dataset.conditions[ex.cond])?;
    }
    Ok(total / indices.len().max(1) as f64)
}

/// Next-token pretraining from random initialization.
pub fn train_stage1(
    dataset: &Stage1Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(Parameters, TrainReport), ModelError> {
    if dataset.examples.is_empty() {
        return Err(ModelError::Config("empty stage-1 dataset".into()));
    }
    let mut params = Parameters::init(model_cfg, train_cfg.seed)?;
    let mut adam = Adam::new(params.data.len(), train_cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(train_cfg.seed, 0x5741_u64));

    let probe: Vec<usize> = (0..dataset.examples.len().min(32)).collect();
    let eval_initial = eval_mean_loss(model_cfg, &params, dataset, &probe)?;

    let mut losses = Vec::with_capacity(train_cfg.steps);
    let mut grads = params.zeros_like();
    for step in 0..train_cfg.steps {
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_loss = 0.0;
        for _ in 0..train_cfg.batch {
            let i = rng.gen_range(0..dataset.examples.len());
            let ex = &dataset.examples[i];
            batch_loss += next_token_loss_and_grad(
                model_cfg,
                &params,
                &ex.ids,
                &ex.levels,
                &dataset.conditions[ex.cond],
                1.0 / train_cfg.batch as f64,
                &mut grads,
            )?;
        }
        batch_loss /= train_cfg.batch as f64;
        if let Some(max) = train_cfg.grad_clip {
            clip_gradients(&mut grads, max);
        }
        let lr = warmup_lr(train_cfg.lr, step as u64, train_cfg.warmup);
        adam.step(&mut params.data, &grads, lr);
        losses.push(batch_loss);
    }

    let eval_final = eval_mean_loss(model_cfg, &params, dataset, &probe)?;
    Ok((params, TrainReport { losses, eval_initial, eval_final }))
}

/// One preference pair resolved to ids/levels and a condition index.
#[derive(Debug, Clone)]
pub struct Stage2Example {
    pub y_g: (Vec<u32>, Vec<u32>),
    pub y_b: (Vec<u32>, Vec<u32>),
    pub y_gt: (Vec<u32>, Vec<u32>),
    pub r_g: f64,
    pub r_b: f64,
    pub cond: usize,
}

pub struct Stage2Dataset {
    pub examples: Vec<Stage2Example>,
    pub conditions: Vec<ConditionCache>,
}

impl Stage2Dataset {
    /// Joins serialized pairs with per-asset condition caches by asset name.
    pub fn from_pairs(
        pairs: &[PreferencePair],
        conditions: Vec<(String, ConditionCache)>,
    ) -> Result<Stage2Dataset, ModelError> {
        let index: std::collections::HashMap<&str, usize> = conditions
            .iter()
            .enumerate()
            .map(|(i, (name, _))| (name.as_str(), i))
            .collect();
        let mut examples = Vec::with_capacity(pairs.len());
        for p in pairs {
            let cond = *index.get(p.asset.as_str()).ok_or_else(|| {
                ModelError::Config(format!("no condition cache for asset '{}'", p.asset))
            })?;
            examples.push(Stage2Example {
                y_g: (p.preferred.ids(), p.preferred.level_indices.clone()),
                y_b: (p.rejected.ids(), p.rejected.level_indices.clone()),
                y_gt: (p.ground_truth.ids(), p.ground_truth.level_indices.clone()),
                r_g: p.reward_preferred,
                r_b: p.reward_rejected,
                cond,
            });
        }
        Ok(Stage2Dataset {
            examples,
            conditions: conditions.into_iter().map(|(_, c)| c).collect(),
        })
    }
}

/// Preference loss for one pair: the reward-weighted DPO term plus
/// `λ ·` next-token loss on the ground truth. The reference is frozen.
pub fn stage2_loss(
    cfg: &ModelConfig,
    policy: &Parameters,
    reference: &Parameters,
    ex: &Stage2Example,
    conditions: &[ConditionCache],
    beta: f64,
    lambda: f64,
    variant: DpoVariant,
) -> Result<f64, ModelError> {
    stage2_loss_impl(cfg, policy, reference, ex, conditions, beta, lambda, variant, None)
}

/// As [`stage2_loss`], accumulating `scale * gradient` w.r.t. the POLICY
/// parameters only.
#[allow(clippy::too_many_arguments)]
pub fn stage2_loss_and_grad(
    cfg: &ModelConfig,
    policy: &Parameters,
    reference: &Parameters,
    ex: &Stage2Example,
    conditions: &[ConditionCache],
    beta: f64,
    lambda: f64,
    variant: DpoVariant,
    scale: f64,
    grads: &mut [f64],
) -> Result<f64, ModelError> {
    stage2_loss_impl(
        cfg, policy, reference, ex, conditions, beta, lambda, variant,
        Some((scale, grads)),
    )
}

#[allow(clippy::too_many_arguments)]
fn stage2_loss_impl(
    cfg: &ModelConfig,
    policy: &Parameters,
    reference: &Parameters,
    ex: &Stage2Example,
    conditions: &[ConditionCache],
    beta: f64,
    lambda: f64,
    variant: DpoVariant,
    grad: Option<(f64, &mut [f64])>,
) -> Result<f64, ModelError> {
    let cond = &conditions[ex.cond];
    let lp_g = sequence_logprob(cfg, policy, &ex.y_g.0, &ex.y_g.1, cond)?;
    let lp_b = sequence_logprob(cfg, policy, &ex.y_b.0, &ex.y_b.1, cond)?;
    let ref_g = sequence_logprob(cfg, reference, &ex.y_g.0, &ex.y_g.1, cond)?;
    let ref_b = sequence_logprob(cfg, reference, &ex.y_b.0, &ex.y_b.1, cond)?;
    let (dpo, d_lr_g, d_lr_b) =
        dpo_loss_grad(lp_g - ref_g, lp_b - ref_b, ex.r_g, ex.r_b, beta, variant);

    match grad {
        None => {
            let sft = next_token_loss(cfg, policy, &ex.y_gt.0, &ex.y_gt.1, cond)?;
            Ok(dpo + lambda * sft)
        }
        Some((scale, grads)) => {
            sequence_logprob_and_grad(cfg, policy, &ex.y_g.0, &ex.y_g.1, cond, scale * d_lr_g, grads)?;
            sequence_logprob_and_grad(cfg, policy, &ex.y_b.0, &ex.y_b.1, cond, scale * d_lr_b, grads)?;
            let sft = next_token_loss_and_grad(
                cfg, policy, &ex.y_gt.0, &ex.y_gt.1, cond, scale * lambda, grads,
            )?;
            Ok(dpo + lambda * sft)
        }
    }
}

/// Mean implicit-reward margin `β·(Δ log-ratio)` over a pair set.
pub fn implicit_reward_margin(
    cfg: &ModelConfig,
    policy: &Parameters,
    reference: &Parameters,
    examples: &[Stage2Example],
    conditions: &[ConditionCache],
    beta: f64,
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for ex in examples {
        let cond = &conditions[ex.cond];
        let lp_g = sequence_logprob(cfg, policy, &ex.y_g.0, &ex.y_g.1, cond)?;
        let lp_b = sequence_logprob(cfg, policy, &ex.y_b.0, &ex.y_b.1, cond)?;
        let ref_g = sequence_logprob(cfg, reference, &ex.y_g.0, &ex.y_g.1, cond)?;
        let ref_b = sequence_logprob(cfg, reference, &ex.y_b.0, &ex.y_b.1, cond)?;
        total += beta * ((lp_g - ref_g) - (lp_b - ref_b));
    }
    Ok(total / examples.len().max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct Stage2Report {
    pub losses: Vec<f64>,
    /// `(step, margin)` probes on the held-out pairs, including step 0 and
    /// the final step.
    pub margins: Vec<(usize, f64)>,
}

/// Reward-guided preference fine-tuning starting from (a copy of) the frozen
/// reference parameters.
pub fn train_stage2(
    dataset: &Stage2Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    reference: &Parameters,
) -> Result<(Parameters, Stage2Report), ModelError> {
    if dataset.examples.is_empty() {
        return Err(ModelError::Config("empty stage-2 dataset".into()));
    }
    let holdout_n = train_cfg.holdout.min(dataset.examples.len().saturating_sub(1));
    let split = dataset.examples.len() - holdout_n;
    let (train_set, holdout) = dataset.examples.split_at(split);
    if train_set.is_empty() {
        return Err(ModelError::Config("holdout leaves no training pairs".into()));
    }
    let margin_set: &[Stage2Example] = if holdout.is_empty() { train_set } else { holdout };

    let mut policy = reference.clone();
    let mut adam = Adam::new(policy.data.len(), train_cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(train_cfg.seed, 0x5742_u64));
    let mut grads = policy.zeros_like();
    let mut losses = Vec::with_capacity(train_cfg.steps);
    let mut margins = Vec::new();

    let m0 = implicit_reward_margin(
        model_cfg, &policy, reference, margin_set, &dataset.conditions, train_cfg.beta,
    )?;
    margins.push((0, m0));

    for step in 0..train_cfg.steps {
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_loss = 0.0;
        for _ in 0..train_cfg.batch {
            let i = rng.gen_range(0..train_set.len());
            batch_loss += stage2_loss_and_grad(
                model_cfg,
                &policy,
                reference,
                &train_set[i],
                &dataset.conditions,
                train_cfg.beta,
                train_cfg.lambda,
                train_cfg.dpo_variant,
                1.0 / train_cfg.batch as f64,
                &mut grads,
            )?;
        }
        batch_loss /= train_cfg.batch as f64;
        if let Some(max) = train_cfg.grad_clip {
            clip_gradients(&mut grads, max);
        }
        let lr = warmup_lr(train_cfg.lr, step as u64, train_cfg.warmup);
        adam.step(&mut policy.data, &grads, lr);
        losses.push(batch_loss);

        if (step + 1) % train_cfg.eval_every == 0 || step + 1 == train_cfg.steps {
            let m = implicit_reward_margin(
                model_cfg, &policy, reference, margin_set, &dataset.conditions, train_cfg.beta,
            )?;
            margins.push((step + 1, m));
        }
    }
    Ok((policy, Stage2Report { losses, margins }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::Mesh;
    use nalgebra::Vector3;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn tiny_assets(n: usize) -> Vec<Asset> {
        (0..n)
            .map(|i| {
                let off = i as f64 * 0.01;
                let mesh = Mesh::new(
                    vec![
                        v(-0.3 + off, -0.3, -0.3),
                        v(0.3, -0.25, -0.3),
                        v(0.0, 0.3, -0.25),
                        v(0.0, 0.0, 0.35),
                    ],
                    vec![[0, 1, 2], [0, 1, 3], [1, 2, 3], [0, 2, 3]],
                );
                let tree = crate::skeleton::SkeletonTree::from_positions(&[
                    (v(0.0, 0.0, -0.2 + off), None),
                    (v(0.05, 0.0, 0.0), Some(0)),
                    (v(0.0, 0.05, 0.2), Some(1)),
                ]);
                Asset::new(mesh, tree, format!("a{i}"))
            })
            .collect()
    }

    #[test]
    fn empty_dataset_is_config_error() {
        let cfg = ModelConfig::tiny(260);
        let ds = Stage1Dataset {
            examples: vec![],
            conditions: vec![],
            spec: QuantizationSpec::default(),
            names: vec![],
        };
        assert!(train_stage1(&ds, &cfg, &TrainConfig::toy_stage1(0)).is_err());
    }

    #[test]
    fn stage1_loss_curve_is_reproducible_bitwise() {
        let cfg = ModelConfig::tiny(260);
        let assets = tiny_assets(4);
        let ds = build_stage1_dataset(&assets, &cfg, QuantizationSpec::default(), 64, 5).unwrap();
        let mut tc = TrainConfig::toy_stage1(9);
        tc.steps = 5;
        tc.batch = 2;
        let (p1, r1) = train_stage1(&ds, &cfg, &tc).unwrap();
        let (p2, r2) = train_stage1(&ds, &cfg, &tc).unwrap();
        assert_eq!(p1.data, p2.data);
        assert_eq!(r1.losses, r2.losses);
    }

    #[test]
    fn stage1_reduces_loss_on_tiny_corpus() {
        let cfg = ModelConfig::tiny(260);
        let assets = tiny_assets(4);
        let ds = build_stage1_dataset(&assets, &cfg, QuantizationSpec::default(), 64, 5).unwrap();
        let mut tc = TrainConfig::toy_stage1(7);
        tc.steps = 60;
        tc.batch = 2;
        let (_, report) = train_stage1(&ds, &cfg, &tc).unwrap();
        assert!(
            report.eval_final < report.eval_initial,
            "loss did not drop: {} -> {}",
            report.eval_initial,
            report.eval_final
        );
    }

    #[test]
    fn stage2_reference_slice_is_untouched() {
        use crate::preference::PreferencePair;
        use crate::tokenizer::tokenize;

        let cfg = ModelConfig::tiny(260);
        let assets = tiny_assets(2);
        let ds1 = build_stage1_dataset(&assets, &cfg, QuantizationSpec::default(), 64, 5).unwrap();
        let reference = Parameters::init(&cfg, 3).unwrap();

        let spec = QuantizationSpec::default();
        let seq = |i: usize| tokenize(&assets[i].skeleton, spec).unwrap().sequence;
        let pairs = vec![PreferencePair {
            asset: "a0".into(),
            preferred: seq(0),
            rejected: seq(1),
            reward_preferred: 4.5,
            reward_rejected: 3.0,
            ground_truth: seq(0),
        }];
        let conditions = vec![
            ("a0".to_string(), ds1.conditions[0].clone()),
            ("a1".to_string(), ds1.conditions[1].clone()),
        ];
        let ds2 = Stage2Dataset::from_pairs(&pairs, conditions).unwrap();
        let mut tc = TrainConfig::toy_stage2(1);
        tc.steps = 3;
        tc.batch = 1;
        tc.holdout = 0;
        let ref_before = reference.data.clone();
        let (policy, report) = train_stage2(&ds2, &cfg, &tc, &reference).unwrap();
        assert_eq!(reference.data, ref_before);
        assert_ne!(policy.data, reference.data);
        assert_eq!(report.margins.first().map(|m| m.1), Some(0.0));
    }
}
