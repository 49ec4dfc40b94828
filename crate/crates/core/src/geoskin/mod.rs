//! Geodesic-aware skinning: voxelization with interior/exterior
//! classification, Laplacian-smoothed distance features, hollow (volumetric)
//! vertex-to-bone distances, bone-probability prediction with top-k
//! selection, and the skinning metric suite.

mod boneprob;
mod features;
mod hollow;
mod metrics;
mod smooth;
pub mod train;
mod voxel;

pub use boneprob::{
    distribution_loss, predict_influencing_bones, predict_skin_weights, selection_loss,
    sigmoid, vertex_feature_matrix, BoneProbModel, BoneSelection, SkinningHead,
};
pub use features::{build_features, build_geodesic_grids, DistanceFeatures, GeodesicGrids, FEATURE_DIM};
pub use hollow::{
    bone_distance_field, hollow_distance, hollow_distance_from_field, segment_cells,
    DistanceField, DISCONNECTED_PENALTY,
};
pub use metrics::{skinning_metrics, SkinningMetrics, INFLUENCE_THRESHOLD, POSE_SIGMA_DEG};
pub use smooth::laplacian_smooth;
pub use voxel::{voxelize_mesh, CellLabel, VoxelGrid};

use thiserror::Error;

/// Paper-scale voxel resolution; slow without GPU acceleration.
pub const FULL_RESOLUTION: usize = 256;
/// Desk-scale default resolution.
pub const DEFAULT_RESOLUTION: usize = 64;
/// Default top-k bone selection size.
pub const DEFAULT_K: usize = 6;

#[derive(Debug, Error)]
pub enum GeoskinError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
}
