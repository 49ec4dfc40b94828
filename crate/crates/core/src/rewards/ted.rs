//! Ordered tree edit distance (Zhang & Shasha) over skeleton trees.
//!
//! Insert and delete cost 1; relabeling costs 1 when the two joints sit more
//! than `epsilon` apart, else 0. The distance is computed over the trees'
//! STORED child order — canonicalize first (as `composite_reward` does) to
//! get the order-independent canonical metric, or pass trees whose stored
//! order is meaningful to compare them as-is.

use crate::skeleton::SkeletonTree;
use nalgebra::Vector3;

struct PostorderTree {
    /// Position of node at postorder index i (1-based; slot 0 unused).
    pos: Vec<Vector3<f64>>,
    /// Leftmost leaf descendant per postorder index (1-based).
    lml: Vec<usize>,
    /// LR-keyroots in increasing postorder.
    keyroots: Vec<usize>,
    n: usize,
}

fn build_postorder(tree: &SkeletonTree) -> PostorderTree {
    let n = tree.len();
    let mut pos = vec![Vector3::zeros(); n + 1];
    let mut lml = vec![0usize; n + 1];
    if n == 0 {
        return PostorderTree { pos, lml, keyroots: Vec::new(), n };
    }
    let root = tree.root().expect("ted requires a rooted tree");
    let children = tree.children_table();

    // Iterative postorder, children visited in stored order.
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![(root, false)];
    while let Some((j, expanded)) = stack.pop() {
        if expanded {
            order.push(j);
        } else {
            stack.push((j, true));
            for &c in children[j].iter().rev() {
                stack.push((c, false));
            }
        }
    }

    let mut post_of = vec![0usize; n];
    for (i, &j) in order.iter().enumerate() {
        post_of[j] = i + 1;
        pos[i + 1] = tree.position(j);
    }
    for &j in &order {
        let p = post_of[j];
        lml[p] = if children[j].is_empty() {
            p
        } else {
            lml[post_of[children[j][0]]]
        };
    }
    // Keyroots: nodes whose leftmost leaf is not shared with a higher node.
    let mut keyroots = Vec::new();
    for i in 1..=n {
        if !(i + 1..=n).any(|k| lml[k] == lml[i]) {
            keyroots.push(i);
        }
    }
    PostorderTree { pos, lml, keyroots, n }
}

/// Exact ordered tree edit distance with unit insert/delete and 0/1 relabel
/// (`> epsilon` apart costs 1). `TED(T, T) == 0`.
pub fn tree_edit_distance(pred: &SkeletonTree, gt: &SkeletonTree, epsilon: f64) -> usize {
    let t1 = build_postorder(pred);
    let t2 = build_postorder(gt);
    if t1.n == 0 || t2.n == 0 {
        return t1.n + t2.n;
    }
    let relabel = |i: usize, j: usize| -> usize {
        usize::from((t1.pos[i] - t2.pos[j]).norm() > epsilon)
    };

    let mut td = vec![vec![0usize; t2.n + 1]; t1.n + 1];
    let mut fd = vec![vec![0usize; t2.n + 2]; t1.n + 2];

    for &x in &t1.keyroots {
        for &y in &t2.keyroots {
            let (lx, ly) = (t1.lml[x], t2.lml[y]);
            // fd indices are offset so that lx-1 maps to 0.
            let fi = |i: usize| i + 1 - lx;
            let fj = |j: usize| j + 1 - ly;
            fd[0][0] = 0;
            for i in lx..=x {
                fd[fi(i)][0] = fd[fi(i) - 1][0] + 1;
            }
            for j in ly..=y {
                fd[0][fj(j)] = fd[0][fj(j) - 1] + 1;
            }
            for i in lx..=x {
                for j in ly..=y {
                    let del = fd[fi(i) - 1][fj(j)] + 1;
                    let ins = fd[fi(i)][fj(j) - 1] + 1;
                    if t1.lml[i] == lx && t2.lml[j] == ly {
                        let sub = fd[fi(i) - 1][fj(j) - 1] + relabel(i, j);
                        let best = del.min(ins).min(sub);
                        fd[fi(i)][fj(j)] = best;
                        td[i][j] = best;
                    } else {
                        let split =
                            fd[fi(t1.lml[i]) - 1][fj(t2.lml[j]) - 1] + td[i][j];
                        fd[fi(i)][fj(j)] = del.min(ins).min(split);
                    }
                }
            }
        }
    }
    td[t1.n][t2.n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn identical_trees_have_zero_distance() {
        let t = SkeletonTree::from_positions(&[
            (v(0.0, 0.0, 0.0), None),
            (v(0.1, 0.0, 0.1), Some(0)),
            (v(-0.1, 0.0, 0.2), Some(0)),
            (v(0.0, 0.1, 0.3), Some(1)),
        ]);
        assert_eq!(tree_edit_distance(&t, &t, 0.05), 0);
    }

    #[test]
    fn one_extra_child_costs_one() {
        let a = SkeletonTree::from_positions(&[(v(0.0, 0.0, 0.0), None)]);
        let b = SkeletonTree::from_positions(&[
            (v(0.0, 0.0, 0.0), None),
            (v(0.1, 0.0, 0.0), Some(0)),
        ]);
        assert_eq!(tree_edit_distance(&a, &b, 0.05), 1);
        assert_eq!(tree_edit_distance(&b, &a, 0.05), 1);
    }

    #[test]
    fn displacement_beyond_epsilon_is_one_relabel() {
        let a = SkeletonTree::from_positions(&[
            (v(0.0, 0.0, 0.0), None),
            (v(0.1, 0.0, 0.0), Some(0)),
        ]);
        let b = SkeletonTree::from_positions(&[
            (v(0.0, 0.0, 0.0), None),
            (v(0.3, 0.0, 0.0), Some(0)),
        ]);
        assert_eq!(tree_edit_distance(&a, &b, 0.05), 1);
        // With a generous tolerance the displacement is free.
        assert_eq!(tree_edit_distance(&a, &b, 0.5), 0);
        assert_eq!(tree_edit_distance(&a, &b, f64::INFINITY), 0);
    }

    #[test]
    fn chain_vs_star_structure() {
        // Chain r-a-b vs star r-(a,b): relabels are free (eps=inf) but the
        // shapes differ: move b one level up = delete + insert.
        let chain = SkeletonTree::from_positions(&[
            (v(0.0, 0.0, 0.0), None),
            (v(0.0, 0.0, 0.1), Some(0)),
            (v(0.0, 0.0, 0.2), Some(1)),
        ]);
        let star = SkeletonTree::from_positions(&[
            (v(0.0, 0.0, 0.0), None),
            (v(0.0, 0.0, 0.1), Some(0)),
            (v(0.0, 0.0, 0.2), Some(0)),
        ]);
        assert_eq!(tree_edit_distance(&chain, &star, f64::INFINITY), 2);
    }
}
