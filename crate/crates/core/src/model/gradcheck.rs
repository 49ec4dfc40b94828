//! Central-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A scalar loss with an analytic gradient over a flat parameter vector.
pub trait DifferentiableLoss {
    fn value(&self, params: &[f64]) -> f64;
    fn gradient(&self, params: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: usize,
}

/// Probes `probe_count` randomly chosen coordinates with central differences
/// of step `h` (scaled by the coordinate's magnitude) and compares against
/// the analytic gradient. Relative error uses `max(|analytic|, |fd|, 1e-6)`
/// as the denominator so near-zero gradients do not blow up the ratio.
pub fn finite_difference_gradcheck(
    loss: &dyn DifferentiableLoss,
    params: &[f64],
    probe_count: usize,
    h: f64,
    seed: u64,
) -> GradCheckReport {
    let analytic = loss.gradient(params);
    assert_eq!(analytic.len(), params.len(), "gradient length mismatch");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.to_vec();
    let mut max_rel = 0.0f64;
    let probes = probe_count.min(params.len());
    for _ in 0..probes {
        let i = rng.gen_range(0..params.len());
        let step = h * params[i].abs().max(1.0);
        let orig = work[i];
        work[i] = orig + step;
        let up = loss.value(&work);
        work[i] = orig - step;
        let down = loss.value(&work);
        work[i] = orig;
        let fd = (up - down) / (2.0 * step);
        let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
        let rel = (analytic[i] - fd).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    GradCheckReport { max_rel_error: max_rel, probes }
}
