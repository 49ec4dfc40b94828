//! Per-(vertex, bone) distance features for bone-probability prediction.
//!
//! 15 reals per pair: vertex position (3), vertex normal (3), bone start and
//! end joints (3+3), and the hollow distance on the raw mesh plus on the
//! meshes after 5 and 10 Laplacian smoothing iterations (1+1+1).

use super::hollow::{bone_distance_field, hollow_distance_from_field};
use super::smooth::laplacian_smooth;
use super::voxel::{voxelize_mesh, VoxelGrid};
use super::GeoskinError;
use crate::skeleton::{Bone, Mesh, SkeletonTree};

pub const FEATURE_DIM: usize = 15;

/// Dense feature table, row-major over `(vertex, bone)`.
#[derive(Debug, Clone)]
pub struct DistanceFeatures {
    pub vertex_count: usize,
    pub bone_count: usize,
    data: Vec<f64>,
}

impl DistanceFeatures {
    pub fn row(&self, vertex: usize, bone: usize) -> &[f64] {
        let off = (vertex * self.bone_count + bone) * FEATURE_DIM;
        &self.data[off..off + FEATURE_DIM]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// The raw-mesh grid plus the two smoothed variants used for the geodesic
/// features.
#[derive(Debug, Clone)]
pub struct GeodesicGrids {
    pub raw: VoxelGrid,
    pub l5_mesh: Mesh,
    pub l5: VoxelGrid,
    pub l10_mesh: Mesh,
    pub l10: VoxelGrid,
}

pub fn build_geodesic_grids(mesh: &Mesh, resolution: usize) -> Result<GeodesicGrids, GeoskinError> {
    let raw = voxelize_mesh(mesh, resolution)?;
    let l5_mesh = laplacian_smooth(mesh, 5);
    let l5 = voxelize_mesh(&l5_mesh, resolution)?;
    let l10_mesh = laplacian_smooth(&l5_mesh, 5); // 5 more = 10 total
    let l10 = voxelize_mesh(&l10_mesh, resolution)?;
    Ok(GeodesicGrids { raw, l5_mesh, l5, l10_mesh, l10 })
}

/// Builds the full feature table. Each bone runs one distance field per grid;
/// smoothed distances pair the smoothed vertex position with the
/// smoothed-mesh grid.
pub fn build_features(
    mesh: &Mesh,
    tree: &SkeletonTree,
    grids: &GeodesicGrids,
) -> Result<DistanceFeatures, GeoskinError> {
    let bones: Vec<Bone> = tree.bones();
    let nv = mesh.vertices.len();
    let nb = bones.len();
    let normals = mesh.vertex_normals();
    let mut data = vec![0.0f64; nv * nb * FEATURE_DIM];

    for (bi, bone) in bones.iter().enumerate() {
        let (a, b) = (tree.position(bone.parent), tree.position(bone.joint));
        let field_raw = bone_distance_field(&grids.raw, a, b)?;
        let field_l5 = bone_distance_field(&grids.l5, a, b)?;
        let field_l10 = bone_distance_field(&grids.l10, a, b)?;

        for v in 0..nv {
            let p = mesh.vertices[v];
            let n = normals[v];
            let d_raw = hollow_distance_from_field(&field_raw, &grids.raw, p, a, b)?;
            let d_l5 = hollow_distance_from_field(
                &field_l5,
                &grids.l5,
                grids.l5_mesh.vertices[v],
                a,
                b,
            )?;
            let d_l10 = hollow_distance_from_field(
                &field_l10,
                &grids.l10,
                grids.l10_mesh.vertices[v],
                a,
                b,
            )?;
            let row = [
                p.x, p.y, p.z, n.x, n.y, n.z, a.x, a.y, a.z, b.x, b.y, b.z, d_raw, d_l5, d_l10,
            ];
            let off = (v * nb + bi) * FEATURE_DIM;
            data[off..off + FEATURE_DIM].copy_from_slice(&row);
        }
    }
    Ok(DistanceFeatures { vertex_count: nv, bone_count: nb, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn box_asset() -> (Mesh, SkeletonTree) {
        let corners = [
            v(-0.4, -0.2, -0.2), v(0.4, -0.2, -0.2), v(0.4, 0.2, -0.2), v(-0.4, 0.2, -0.2),
            v(-0.4, -0.2, 0.2), v(0.4, -0.2, 0.2), v(0.4, 0.2, 0.2), v(-0.4, 0.2, 0.2),
        ];
        let quads = [
            [0, 3, 2, 1], [4, 5, 6, 7], [0, 1, 5, 4],
            [2, 3, 7, 6], [1, 2, 6, 5], [3, 0, 4, 7],
        ];
        let mut faces = Vec::new();
        for q in quads {
            faces.push([q[0], q[1], q[2]]);
            faces.push([q[0], q[2], q[3]]);
        }
        let mesh = Mesh::new(corners.to_vec(), faces);
        let tree = SkeletonTree::from_positions(&[
            (v(-0.3, 0.0, 0.0), None),
            (v(0.0, 0.0, 0.0), Some(0)),
            (v(0.3, 0.0, 0.0), Some(1)),
        ]);
        (mesh, tree)
    }

    #[test]
    fn feature_rows_have_fifteen_entries() {
        let (mesh, tree) = box_asset();
        let grids = build_geodesic_grids(&mesh, 8).unwrap();
        let feats = build_features(&mesh, &tree, &grids).unwrap();
        assert_eq!(feats.vertex_count, mesh.vertices.len());
        assert_eq!(feats.bone_count, 2);
        assert_eq!(feats.row(0, 0).len(), FEATURE_DIM);
        assert_eq!(
            feats.as_slice().len(),
            mesh.vertices.len() * 2 * FEATURE_DIM
        );
    }

    #[test]
    fn features_are_deterministic_and_finite() {
        let (mesh, tree) = box_asset();
        let grids = build_geodesic_grids(&mesh, 8).unwrap();
        let a = build_features(&mesh, &tree, &grids).unwrap();
        let b = build_features(&mesh, &tree, &grids).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert!(a.as_slice().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn bone_endpoint_features_match_tree() {
        let (mesh, tree) = box_asset();
        let grids = build_geodesic_grids(&mesh, 8).unwrap();
        let feats = build_features(&mesh, &tree, &grids).unwrap();
        let row = feats.row(0, 1); // bone 1: joints 1 -> 2
        assert_eq!(&row[6..9], &[0.0, 0.0, 0.0]);
        assert_eq!(&row[9..12], &[0.3, 0.0, 0.0]);
    }
}
