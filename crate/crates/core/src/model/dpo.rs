//! Reward-weighted preference losses over policy/reference log-ratios.
//!
//! The default form multiplies the scaled log-ratio gap by the reward
//! difference directly; it is zero when the policy equals the reference or
//! when the rewards tie, and is unbounded below, which is why trainers pair
//! it with gradient clipping and the auxiliary SFT term. The sigmoid variant
//! squashes the gap through `-ln σ(β Δ)` before reward weighting.

use serde::{Deserialize, Serialize};

pub const DEFAULT_BETA: f64 = 0.3;
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DpoVariant {
    /// `-(β·lr_g - β·lr_b) · (r_g - r_b)`
    #[default]
    Literal,
    /// `-ln σ(β·(lr_g - lr_b)) · (r_g - r_b)`
    Sigmoid,
}

impl std::str::FromStr for DpoVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(DpoVariant::Literal),
            "sigmoid" => Ok(DpoVariant::Sigmoid),
            other => Err(format!("unknown dpo variant '{other}' (literal|sigmoid)")),
        }
    }
}

/// Single-pair preference loss from precomputed log-ratios
/// `lr = log π(y|x) - log π_ref(y|x)`.
pub fn dpo_loss(
    logratio_g: f64,
    logratio_b: f64,
    r_g: f64,
    r_b: f64,
    beta: f64,
    variant: DpoVariant,
) -> f64 {
    dpo_loss_grad(logratio_g, logratio_b, r_g, r_b, beta, variant).0
}

/// Loss plus its partials w.r.t. the two log-ratios.
pub fn dpo_loss_grad(
    logratio_g: f64,
    logratio_b: f64,
    r_g: f64,
    r_b: f64,
    beta: f64,
    variant: DpoVariant,
) -> (f64, f64, f64) {
    let dr = r_g - r_b;
    match variant {
        DpoVariant::Literal => {
            let loss = -(beta * logratio_g - beta * logratio_b) * dr;
            (loss, -beta * dr, beta * dr)
        }
        DpoVariant::Sigmoid => {
            let delta = beta * (logratio_g - logratio_b);
            let sig = 1.0 / (1.0 + (-delta).exp());
            let loss = -sig.ln() * dr;
            let d_delta = -(1.0 - sig) * dr;
            (loss, d_delta * beta, -d_delta * beta)
        }
    }
}
