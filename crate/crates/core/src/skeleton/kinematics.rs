//! Forward kinematics and linear blend skinning.
//!
//! A pose stores one local rotation per joint. Joint `j`'s rotation swings
//! the bone (parent → j) about the parent joint, carrying j's whole subtree;
//! the root's rotation spins the skeleton about the root rest position, with
//! an optional root translation on top. Bone transforms for skinning are the
//! accumulated per-joint transforms, so slot `j` moves rigidly with joint `j`.

use super::{Mesh, SkeletonError, SkeletonTree};
use nalgebra::{Matrix3, Vector3};

/// Rigid/affine map `x -> linear * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub linear: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Affine {
    pub fn identity() -> Self {
        Self { linear: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Rotation about a fixed pivot point.
    pub fn rotation_about(rotation: Matrix3<f64>, pivot: Vector3<f64>) -> Self {
        Self { linear: rotation, translation: pivot - rotation * pivot }
    }

    pub fn apply(&self, x: Vector3<f64>) -> Vector3<f64> {
        self.linear * x + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Affine) -> Affine {
        Affine {
            linear: self.linear * other.linear,
            translation: self.linear * other.translation + self.translation,
        }
    }
}

/// Per-joint local rotations plus an optional root translation.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotations: Vec<Matrix3<f64>>,
    pub root_translation: Vector3<f64>,
}

impl Pose {
    pub fn identity(joint_count: usize) -> Self {
        Self {
            rotations: vec![Matrix3::identity(); joint_count],
            root_translation: Vector3::zeros(),
        }
    }

    /// Checks rotation orthonormality and determinant +1, both within 1e-6.
    pub fn validate(&self) -> Result<(), SkeletonError> {
        for (i, r) in self.rotations.iter().enumerate() {
            let err = (r * r.transpose() - Matrix3::identity()).norm();
            if err > 1e-6 {
                return Err(SkeletonError::Contract(format!(
                    "rotation {i} not orthonormal (|R R^T - I| = {err:.2e})"
                )));
            }
            if (r.determinant() - 1.0).abs() > 1e-6 {
                return Err(SkeletonError::Contract(format!(
                    "rotation {i} has determinant {} (expected +1)",
                    r.determinant()
                )));
            }
        }
        if !self.root_translation.iter().all(|c| c.is_finite()) {
            return Err(SkeletonError::Contract("non-finite root translation".into()));
        }
        Ok(())
    }
}

/// Sparse per-vertex bone weights. Slot indices are joint ids (the bone
/// ending at joint `j` uses slot `j`; the root's slot anchors vertices bound
/// directly to it).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SkinWeights {
    /// `per_vertex[v]` lists `(slot, weight)` pairs.
    pub per_vertex: Vec<Vec<(usize, f64)>>,
}

impl SkinWeights {
    pub fn vertex_count(&self) -> usize {
        self.per_vertex.len()
    }

    /// Nonnegative weights, in-range slots, rows summing to 1 within 1e-5.
    pub fn validate(&self, slot_count: usize) -> Result<(), SkeletonError> {
        for (v, row) in self.per_vertex.iter().enumerate() {
            let mut sum = 0.0;
            for &(slot, w) in row {
                if slot >= slot_count {
                    return Err(SkeletonError::Contract(format!(
                        "vertex {v}: slot {slot} out of range (slot count {slot_count})"
                    )));
                }
                if !(w >= 0.0) {
                    return Err(SkeletonError::Contract(format!(
                        "vertex {v}: negative or NaN weight {w}"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-5 {
                return Err(SkeletonError::Contract(format!(
                    "vertex {v}: weights sum to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Keeps at most `k` largest weights per vertex (ties: lower slot wins)
    /// and renormalizes each row to sum 1.
    pub fn top_k_pruned(&self, k: usize) -> SkinWeights {
        let per_vertex = self
            .per_vertex
            .iter()
            .map(|row| {
                let mut row = row.clone();
                row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                row.truncate(k);
                let sum: f64 = row.iter().map(|&(_, w)| w).sum();
                if sum > 0.0 {
                    for e in &mut row {
                        e.1 /= sum;
                    }
                }
                row.sort_by_key(|&(slot, _)| slot);
                row
            })
            .collect();
        SkinWeights { per_vertex }
    }

    /// Dense weight row of length `slot_count`.
    pub fn dense_row(&self, vertex: usize, slot_count: usize) -> Vec<f64> {
        let mut out = vec![0.0; slot_count];
        for &(slot, w) in &self.per_vertex[vertex] {
            out[slot] += w;
        }
        out
    }
}

/// Accumulated world transform per joint under `pose`.
pub fn fk_transforms(tree: &SkeletonTree, pose: &Pose) -> Result<Vec<Affine>, SkeletonError> {
    if pose.rotations.len() != tree.len() {
        return Err(SkeletonError::Arity(format!(
            "pose has {} rotations for {} joints",
            pose.rotations.len(),
            tree.len()
        )));
    }
    pose.validate()?;
    let violations = super::validate_tree(tree);
    if !violations.is_empty() {
        return Err(SkeletonError::InvalidTree(violations[0].message.clone()));
    }

    let root = tree.root().expect("validated");
    let children = tree.children_table();
    let mut transforms = vec![Affine::identity(); tree.len()];

    let mut root_local = Affine::rotation_about(pose.rotations[root], tree.position(root));
    root_local.translation += pose.root_translation;
    transforms[root] = root_local;

    // Parents precede children in a BFS walk, so accumulation is one pass.
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(j) = queue.pop_front() {
        for &c in &children[j] {
            let local = Affine::rotation_about(pose.rotations[c], tree.position(j));
            transforms[c] = transforms[j].compose(&local);
            queue.push_back(c);
        }
    }
    Ok(transforms)
}

/// Posed joint positions.
pub fn forward_kinematics(
    tree: &SkeletonTree,
    pose: &Pose,
) -> Result<Vec<Vector3<f64>>, SkeletonError> {
    let transforms = fk_transforms(tree, pose)?;
    Ok(tree
        .joints()
        .iter()
        .map(|j| transforms[j.id].apply(j.position))
        .collect())
}

/// Deforms a mesh: `v' = Σ_slot w_{v,slot} · G_slot(v)`.
pub fn linear_blend_skinning(
    mesh: &Mesh,
    tree: &SkeletonTree,
    weights: &SkinWeights,
    pose: &Pose,
) -> Result<Mesh, SkeletonError> {
    if weights.vertex_count() != mesh.vertices.len() {
        return Err(SkeletonError::Arity(format!(
            "weights cover {} vertices, mesh has {}",
            weights.vertex_count(),
            mesh.vertices.len()
        )));
    }
    weights.validate(tree.slot_count())?;
    let transforms = fk_transforms(tree, pose)?;

    let mut out = mesh.clone();
    for (v, row) in out.vertices.iter_mut().zip(&weights.per_vertex) {
        let rest = *v;
        let mut blended = Vector3::zeros();
        for &(slot, w) in row {
            blended += transforms[slot].apply(rest) * w;
        }
        *v = blended;
    }
    Ok(out)
}
