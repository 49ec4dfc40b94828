//! Rooted skeleton trees: joints, bones, validation, BFS levels, and the
//! canonical child ordering used by the tokenizer and the ordered tree edit
//! distance.

use super::SkeletonError;
use nalgebra::Vector3;
use std::collections::VecDeque;

/// A single joint. `parent == None` marks the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub id: usize,
    pub name: String,
    pub position: Vector3<f64>,
    pub parent: Option<usize>,
}

/// A bone is the segment between a parent joint and a child joint. It is
/// identified by its child joint (`joint`), which doubles as the skin-weight
/// slot index for that bone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bone {
    /// Child joint id; the bone's slot index.
    pub joint: usize,
    /// Parent joint id.
    pub parent: usize,
}

/// A rooted tree of joints with 3D positions.
///
/// Child order is derived from joint ids: the children of a joint are listed
/// in ascending id order. [`SkeletonTree::canonicalize_children_order`]
/// renumbers joints so that this stored order is the canonical z-sorted BFS
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTree {
    joints: Vec<Joint>,
}

/// A single violated tree invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeViolation {
    pub joint: Option<usize>,
    pub message: String,
}

/// Per-joint BFS depths plus the level count `L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Levels {
    /// `level_of[j]` is joint j's depth; root depth is 0.
    pub level_of: Vec<u32>,
    /// Number of levels, `max depth + 1`.
    pub count: usize,
}

impl Levels {
    /// Joint count of every level, indexed by level.
    pub fn level_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.count];
        for &l in &self.level_of {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Total joints in the first `L - 1` levels (`M` in the token-count
    /// formula `3J + M + L`).
    pub fn joints_above_last_level(&self) -> usize {
        let sizes = self.level_sizes();
        sizes[..sizes.len().saturating_sub(1)].iter().sum()
    }
}

impl SkeletonTree {
    /// Builds a tree from a joint list. Ids are rewritten to list positions;
    /// parent links are taken as-is and checked only by [`validate_tree`].
    pub fn from_joints(mut joints: Vec<Joint>) -> Self {
        for (i, j) in joints.iter_mut().enumerate() {
            j.id = i;
        }
        Self { joints }
    }

    /// Convenience constructor from `(position, parent)` pairs with generated
    /// names `j0, j1, ...`.
    pub fn from_positions(spec: &[(Vector3<f64>, Option<usize>)]) -> Self {
        let joints = spec
            .iter()
            .enumerate()
            .map(|(i, (p, parent))| Joint {
                id: i,
                name: format!("j{i}"),
                position: *p,
                parent: *parent,
            })
            .collect();
        Self::from_joints(joints)
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn position(&self, id: usize) -> Vector3<f64> {
        self.joints[id].position
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.joints.iter().map(|j| j.position).collect()
    }

    /// Index of the root joint, if exactly one joint has no parent.
    pub fn root(&self) -> Option<usize> {
        let mut roots = self.joints.iter().filter(|j| j.parent.is_none());
        match (roots.next(), roots.next()) {
            (Some(r), None) => Some(r.id),
            _ => None,
        }
    }

    /// Children of every joint, in ascending child-id order.
    pub fn children_table(&self) -> Vec<Vec<usize>> {
        let mut table = vec![Vec::new(); self.joints.len()];
        for j in &self.joints {
            if let Some(p) = j.parent {
                if p < table.len() {
                    table[p].push(j.id);
                }
            }
        }
        table
    }

    /// Bones as (parent, child) segments, ordered by child id. A `J`-joint
    /// tree has `J - 1` bones; the root spans no bone.
    pub fn bones(&self) -> Vec<Bone> {
        self.joints
            .iter()
            .filter_map(|j| j.parent.map(|p| Bone { joint: j.id, parent: p }))
            .collect()
    }

    /// Number of skin-weight slots (= joint count; the root occupies a
    /// degenerate slot anchoring vertices that bind directly to it).
    pub fn slot_count(&self) -> usize {
        self.joints.len()
    }

    /// Applies `f` to every joint position, returning a new tree.
    pub fn map_positions(&self, mut f: impl FnMut(Vector3<f64>) -> Vector3<f64>) -> Self {
        let mut t = self.clone();
        for j in &mut t.joints {
            j.position = f(j.position);
        }
        t
    }

    /// Canonical form: joints renumbered into BFS order with each joint's
    /// children sorted by z ascending (ties: x, then y, then original index).
    pub fn canonicalize_children_order(&self) -> SkeletonTree {
        self.canonicalize_with_map().0
    }

    /// As [`Self::canonicalize_children_order`], also returning
    /// `new_to_old[new_id] = old_id` so callers can remap per-joint data.
    pub fn canonicalize_with_map(&self) -> (SkeletonTree, Vec<usize>) {
        let root = match self.root() {
            Some(r) => r,
            None => return (self.clone(), (0..self.len()).collect()),
        };
        let children = self.children_table();
        let key = |&c: &usize| {
            let p = self.joints[c].position;
            (OrdF(p.z), OrdF(p.x), OrdF(p.y), c)
        };

        let mut new_to_old = Vec::with_capacity(self.len());
        let mut queue = VecDeque::new();
        queue.push_back(root);
        while let Some(j) = queue.pop_front() {
            new_to_old.push(j);
            let mut kids = children[j].clone();
            kids.sort_by_key(key);
            queue.extend(kids);
        }
        if new_to_old.len() != self.len() {
            // Unreachable joints (invalid tree): append them in old order so
            // the permutation stays total.
            let mut seen = vec![false; self.len()];
            for &o in &new_to_old {
                seen[o] = true;
            }
            new_to_old.extend((0..self.len()).filter(|&i| !seen[i]));
        }

        let mut old_to_new = vec![0usize; self.len()];
        for (n, &o) in new_to_old.iter().enumerate() {
            old_to_new[o] = n;
        }
        let joints = new_to_old
            .iter()
            .enumerate()
            .map(|(n, &o)| {
                let j = &self.joints[o];
                Joint {
                    id: n,
                    name: j.name.clone(),
                    position: j.position,
                    parent: j.parent.map(|p| old_to_new[p]),
                }
            })
            .collect();
        (SkeletonTree { joints }, new_to_old)
    }
}

/// Total order on f64 for sorting; NaN sorts last.
#[derive(PartialEq)]
struct OrdF(f64);

impl Eq for OrdF {}
impl PartialOrd for OrdF {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Checks every tree invariant and reports all violations; never panics.
pub fn validate_tree(tree: &SkeletonTree) -> Vec<TreeViolation> {
    let mut out = Vec::new();
    let n = tree.joints.len();
    if n == 0 {
        out.push(TreeViolation { joint: None, message: "empty tree".into() });
        return out;
    }
    let mut roots = 0usize;
    for j in &tree.joints {
        match j.parent {
            None => roots += 1,
            Some(p) => {
                if p >= n {
                    out.push(TreeViolation {
                        joint: Some(j.id),
                        message: format!("parent index {p} out of range (joint count {n})"),
                    });
                } else if p == j.id {
                    out.push(TreeViolation {
                        joint: Some(j.id),
                        message: "cycle/self-parent".into(),
                    });
                }
            }
        }
        if !j.position.iter().all(|c| c.is_finite()) {
            out.push(TreeViolation { joint: Some(j.id), message: "non-finite position".into() });
        }
    }
    if roots == 0 {
        out.push(TreeViolation { joint: None, message: "no root (every joint has a parent)".into() });
    } else if roots > 1 {
        out.push(TreeViolation { joint: None, message: format!("multiple roots ({roots})") });
    }
    if !out.is_empty() {
        return out;
    }

    // Single root, in-range parents: reachability now detects any cycle.
    let root = tree.root().expect("single root checked above");
    let children = tree.children_table();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    let mut reached = 0usize;
    while let Some(j) = queue.pop_front() {
        reached += 1;
        for &c in &children[j] {
            if !seen[c] {
                seen[c] = true;
                queue.push_back(c);
            }
        }
    }
    if reached != n {
        for (i, s) in seen.iter().enumerate() {
            if !s {
                out.push(TreeViolation {
                    joint: Some(i),
                    message: "unreachable from root (cycle or disconnected)".into(),
                });
            }
        }
    }
    out
}

/// BFS depth per joint and the level count `L`. Root depth is 0; each child
/// sits one level below its parent.
pub fn bfs_levels(tree: &SkeletonTree) -> Result<Levels, SkeletonError> {
    let violations = validate_tree(tree);
    if !violations.is_empty() {
        return Err(SkeletonError::InvalidTree(violations[0].message.clone()));
    }
    let root = tree.root().expect("validated");
    let children = tree.children_table();
    let mut level_of = vec![0u32; tree.len()];
    let mut queue = VecDeque::from([root]);
    let mut max_level = 0u32;
    while let Some(j) = queue.pop_front() {
        for &c in &children[j] {
            level_of[c] = level_of[j] + 1;
            max_level = max_level.max(level_of[c]);
            queue.push_back(c);
        }
    }
    Ok(Levels { level_of, count: max_level as usize + 1 })
}
