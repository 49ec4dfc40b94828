//! Optimal joint correspondence between two skeletons.
//!
//! Pairs farther apart than the tolerance are inadmissible; among admissible
//! pairs we take a maximum-cardinality matching of minimum total distance
//! (Hungarian assignment with inadmissible cells priced prohibitively high).

use crate::skeleton::SkeletonTree;

/// One-to-one matched joint pairs, each within `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    /// `(pred joint id, gt joint id)` sorted by pred id then gt id.
    pub pairs: Vec<(usize, usize)>,
    pub epsilon: f64,
}

impl Correspondence {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

const FORBIDDEN: f64 = 1e6;

/// Minimum-cost perfect assignment on a square matrix (Jonker-Volgenant
/// style shortest augmenting paths). Returns `row_of_col[j] = i`.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // row assigned to column (1-based)
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_of_col = vec![usize::MAX; n];
    for j in 1..=n {
        row_of_col[j - 1] = p[j] - 1;
    }
    row_of_col
}

/// Minimum-total-distance one-to-one matching among joint pairs within
/// `epsilon` (maximum cardinality first). Deterministic for fixed inputs.
pub fn match_joints(pred: &SkeletonTree, gt: &SkeletonTree, epsilon: f64) -> Correspondence {
    let np = pred.len();
    let ng = gt.len();
    if np == 0 || ng == 0 {
        return Correspondence { pairs: Vec::new(), epsilon };
    }
    let n = np.max(ng);
    let mut cost = vec![vec![FORBIDDEN; n]; n];
    for i in 0..np {
        for j in 0..ng {
            let d = (pred.position(i) - gt.position(j)).norm();
            if d <= epsilon {
                cost[i][j] = d;
            }
        }
    }
    let row_of_col = hungarian(&cost);
    let mut pairs = Vec::new();
    for (j, &i) in row_of_col.iter().enumerate() {
        if i < np && j < ng && cost[i][j] < FORBIDDEN {
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    Correspondence { pairs, epsilon }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn tree(ps: &[Vector3<f64>]) -> SkeletonTree {
        let spec: Vec<_> = ps
            .iter()
            .enumerate()
            .map(|(i, p)| (*p, if i == 0 { None } else { Some(0) }))
            .collect();
        SkeletonTree::from_positions(&spec)
    }

    fn total_cost(c: &Correspondence, a: &SkeletonTree, b: &SkeletonTree) -> f64 {
        c.pairs
            .iter()
            .map(|&(i, j)| (a.position(i) - b.position(j)).norm())
            .sum()
    }

    /// Exhaustive maximum-cardinality minimum-cost matching for tiny inputs.
    fn brute_force(a: &SkeletonTree, b: &SkeletonTree, eps: f64) -> (usize, f64) {
        fn rec(
            i: usize,
            used: &mut Vec<bool>,
            a: &SkeletonTree,
            b: &SkeletonTree,
            eps: f64,
        ) -> (usize, f64) {
            if i == a.len() {
                return (0, 0.0);
            }
            // Leave joint i unmatched.
            let mut best = rec(i + 1, used, a, b, eps);
            for j in 0..b.len() {
                if !used[j] {
                    let d = (a.position(i) - b.position(j)).norm();
                    if d <= eps {
                        used[j] = true;
                        let (k, c) = rec(i + 1, used, a, b, eps);
                        used[j] = false;
                        let cand = (k + 1, c + d);
                        if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                            best = cand;
                        }
                    }
                }
            }
            best
        }
        rec(0, &mut vec![false; b.len()], a, b, eps)
    }

    #[test]
    fn identical_skeletons_match_fully_at_zero_cost() {
        let t = tree(&[v(0.0, 0.0, 0.0), v(0.1, 0.0, 0.0), v(0.0, 0.2, 0.0)]);
        let c = match_joints(&t, &t, 0.05);
        assert_eq!(c.len(), 3);
        assert_eq!(c.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(total_cost(&c, &t, &t), 0.0);
    }

    #[test]
    fn spurious_far_joint_stays_unmatched() {
        let gt = tree(&[v(0.0, 0.0, 0.0), v(0.1, 0.0, 0.0)]);
        let pred = tree(&[v(0.0, 0.0, 0.0), v(0.1, 0.0, 0.0), v(0.45, 0.45, 0.45)]);
        let c = match_joints(&pred, &gt, 0.05);
        assert_eq!(c.len(), 2);
        assert!(c.pairs.iter().all(|&(i, _)| i != 2));
    }

    #[test]
    fn crossing_candidates_match_brute_force() {
        // 3-vs-3 with deliberately crossing near-ties.
        let a = tree(&[v(0.00, 0.0, 0.0), v(0.03, 0.0, 0.0), v(0.06, 0.0, 0.0)]);
        let b = tree(&[v(0.02, 0.0, 0.0), v(0.05, 0.0, 0.0), v(0.08, 0.0, 0.0)]);
        let eps = 0.05;
        let c = match_joints(&a, &b, eps);
        let (bk, bc) = brute_force(&a, &b, eps);
        assert_eq!(c.len(), bk);
        assert!((total_cost(&c, &a, &b) - bc).abs() < 1e-9);
    }

    #[test]
    fn random_small_cases_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let na = rng.gen_range(1..=4);
            let nb = rng.gen_range(1..=4);
            let mk = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
                let ps: Vec<_> = (0..n)
                    .map(|_| {
                        v(
                            rng.gen_range(-0.1..0.1),
                            rng.gen_range(-0.1..0.1),
                            rng.gen_range(-0.1..0.1),
                        )
                    })
                    .collect();
                tree(&ps)
            };
            let a = mk(&mut rng, na);
            let b = mk(&mut rng, nb);
            let eps = 0.08;
            let c = match_joints(&a, &b, eps);
            let (bk, bc) = brute_force(&a, &b, eps);
            assert_eq!(c.len(), bk, "cardinality mismatch");
            assert!(
                (total_cost(&c, &a, &b) - bc).abs() < 1e-9,
                "cost mismatch: {} vs {}",
                total_cost(&c, &a, &b),
                bc
            );
        }
    }
}
