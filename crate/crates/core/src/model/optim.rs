//! Adam optimizer with decoupled weight decay, linear warmup, and global
//! gradient-norm clipping.

/// Adam state over one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay applied as `p -= lr * wd * p`.
    pub weight_decay: f64,
}

impl Adam {
    pub fn new(param_count: usize, weight_decay: f64) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t as i32);
        let b2c = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / b1c;
            let vhat = self.v[i] / b2c;
            params[i] -= lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

/// Linear warmup: ramps from 0 to `base` over the first `warmup` steps.
pub fn warmup_lr(base: f64, step: u64, warmup: u64) -> f64 {
    if warmup == 0 || step >= warmup {
        base
    } else {
        base * (step + 1) as f64 / warmup as f64
    }
}

/// Scales `grads` in place so the global L2 norm is at most `max_norm`;
/// returns the pre-clip norm.
pub fn clip_gradients(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= s;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_descends_a_quadratic() {
        // f(p) = sum p_i^2, grad = 2p.
        let mut p = vec![1.0, -2.0, 3.0];
        let mut opt = Adam::new(3, 0.0);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &g, 0.05);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-3), "{p:?}");
    }

    #[test]
    fn warmup_ramps_linearly() {
        assert_eq!(warmup_lr(1.0, 0, 10), 0.1);
        assert_eq!(warmup_lr(1.0, 4, 10), 0.5);
        assert_eq!(warmup_lr(1.0, 10, 10), 1.0);
        assert_eq!(warmup_lr(1.0, 100, 10), 1.0);
        assert_eq!(warmup_lr(1.0, 0, 0), 1.0);
    }

    #[test]
    fn clipping_preserves_direction() {
        let mut g = vec![3.0, 4.0];
        let norm = clip_gradients(&mut g, 1.0);
        assert_eq!(norm, 5.0);
        assert!((g[0] - 0.6).abs() < 1e-12);
        assert!((g[1] - 0.8).abs() < 1e-12);
        let mut small = vec![0.1, 0.0];
        clip_gradients(&mut small, 1.0);
        assert_eq!(small, vec![0.1, 0.0]);
    }
}
