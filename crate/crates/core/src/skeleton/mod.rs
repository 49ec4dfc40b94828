//! Canonical data model for meshes and skeleton trees, plus the kinematics
//! (forward kinematics, linear blend skinning) and surface sampling shared by
//! every other module.

mod kinematics;
mod mesh;
mod tree;

pub use kinematics::{forward_kinematics, fk_transforms, linear_blend_skinning, Affine, Pose, SkinWeights};
pub use mesh::{normalize_to_unit_cube, sample_surface_points, Mesh, UnitCubeTransform};
pub use tree::{bfs_levels, validate_tree, Bone, Joint, Levels, SkeletonTree, TreeViolation};

use thiserror::Error;

/// Errors raised by skeleton-space operations.
#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("invalid skeleton tree: {0}")]
    InvalidTree(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("arity mismatch: {0}")]
    Arity(String),
    #[error("contract violation: {0}")]
    Contract(String),
}
