//! Small seeded-sampling helpers shared by augmentation and metrics.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::Rng;

/// Standard normal draw via Box-Muller.
pub fn sample_standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Uniformly distributed unit vector.
pub fn sample_unit_axis(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            sample_standard_normal(rng),
            sample_standard_normal(rng),
            sample_standard_normal(rng),
        );
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Rotation about a uniformly random axis by `angle_rad`.
pub fn rotation_about_random_axis(rng: &mut impl Rng, angle_rad: f64) -> Matrix3<f64> {
    let axis = Unit::new_unchecked(sample_unit_axis(rng));
    *Rotation3::from_axis_angle(&axis, angle_rad).matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_moments_are_plausible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_standard_normal(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn random_rotation_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let r = rotation_about_random_axis(&mut rng, 0.3);
            let err = (r * r.transpose() - Matrix3::identity()).norm();
            assert!(err < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }
}
