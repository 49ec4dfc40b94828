//! Readers and writers for meshes and rigs: OBJ meshes, rig-info text files,
//! native JSON skeleton documents, and token-stream files.
//!
//! All text is UTF-8 with locale-independent decimal numbers; parse errors
//! carry the offending line.

mod json_asset;
mod obj;
mod riginfo;
mod tokens;

pub use json_asset::{load_json_rig, save_json_rig};
pub use obj::{load_obj, save_obj, ObjLoad};
pub use riginfo::{load_rig_info, save_rig_info};
pub use tokens::{read_token_file, write_token_file};

use crate::skeleton::{validate_tree, Mesh, SkeletonTree, SkinWeights};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Structure { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl IoError {
    pub(crate) fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        IoError::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn structure(path: &Path, message: impl Into<String>) -> Self {
        IoError::Structure { path: path.display().to_string(), message: message.into() }
    }
}

/// Rig file flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigFormat {
    /// `joints/root/skin/hier` text records.
    RigInfo,
    /// Native JSON skeleton document.
    Json,
}

impl RigFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            RigFormat::RigInfo => "rig",
            RigFormat::Json => "json",
        }
    }
}

/// Where an asset came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provenance {
    pub mesh_path: Option<PathBuf>,
    pub rig_path: Option<PathBuf>,
}

/// A mesh, its skeleton, and optional skin weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Asset {
    pub mesh: Mesh,
    pub skeleton: SkeletonTree,
    pub skin: Option<SkinWeights>,
    pub name: String,
    pub provenance: Provenance,
}

impl Asset {
    pub fn new(mesh: Mesh, skeleton: SkeletonTree, name: impl Into<String>) -> Self {
        Self { mesh, skeleton, skin: None, name: name.into(), provenance: Provenance::default() }
    }

    /// Tree validity, unique joint names, in-range skin slots.
    pub fn validate(&self) -> Result<(), String> {
        let violations = validate_tree(&self.skeleton);
        if let Some(v) = violations.first() {
            return Err(format!("invalid skeleton: {}", v.message));
        }
        let mut names = HashSet::new();
        for j in self.skeleton.joints() {
            if !names.insert(j.name.as_str()) {
                return Err(format!("duplicate joint name '{}'", j.name));
            }
        }
        if let Some(skin) = &self.skin {
            if skin.vertex_count() > self.mesh.vertices.len() {
                return Err(format!(
                    "skin covers {} vertices but the mesh has {}",
                    skin.vertex_count(),
                    self.mesh.vertices.len()
                ));
            }
            let slots = self.skeleton.slot_count();
            for (v, row) in skin.per_vertex.iter().enumerate() {
                for &(slot, w) in row {
                    if slot >= slots {
                        return Err(format!("vertex {v} references slot {slot} (slots: {slots})"));
                    }
                    if !(w >= 0.0) {
                        return Err(format!("vertex {v} has negative/NaN weight {w}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Loads a mesh (OBJ) plus rig file into an [`Asset`]. The asset name is the
/// rig file stem.
pub fn load_asset(mesh_path: &Path, rig_path: &Path, format: RigFormat) -> Result<Asset, IoError> {
    let obj = load_obj(mesh_path)?;
    let (skeleton, skin, name) = match format {
        RigFormat::RigInfo => load_rig_info(rig_path)?,
        RigFormat::Json => load_json_rig(rig_path)?,
    };
    let asset = Asset {
        mesh: obj.mesh,
        skeleton,
        skin,
        name,
        provenance: Provenance {
            mesh_path: Some(mesh_path.to_path_buf()),
            rig_path: Some(rig_path.to_path_buf()),
        },
    };
    asset
        .validate()
        .map_err(|m| IoError::structure(rig_path, m))?;
    Ok(asset)
}

/// Saves an asset as `<base>.obj` plus `<base>.rig`/`<base>.json`, returning
/// (mesh path, rig path).
pub fn save_asset(
    asset: &Asset,
    format: RigFormat,
    base_path: &Path,
) -> Result<(PathBuf, PathBuf), IoError> {
    let mesh_path = base_path.with_extension("obj");
    let rig_path = base_path.with_extension(format.extension());
    save_obj(&asset.mesh, &mesh_path)?;
    match format {
        RigFormat::RigInfo => save_rig_info(asset, &rig_path)?,
        RigFormat::Json => save_json_rig(asset, &rig_path)?,
    }
    Ok((mesh_path, rig_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{Mesh, SkeletonTree, SkinWeights};
    use nalgebra::Vector3;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    pub(super) fn sample_asset() -> Asset {
        let mesh = Mesh::new(
            vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.25)],
            vec![[0, 1, 2]],
        );
        let skeleton = SkeletonTree::from_positions(&[
            (v(0.1, 0.2, 0.0), None),
            (v(0.4, 0.25, 0.125), Some(0)),
            (v(0.9, 0.125, 0.1), Some(1)),
        ]);
        let mut asset = Asset::new(mesh, skeleton, "sample");
        asset.skin = Some(SkinWeights {
            per_vertex: vec![
                vec![(0, 1.0)],
                vec![(1, 0.25), (2, 0.75)],
                vec![(1, 1.0)],
            ],
        });
        asset
    }

    #[test]
    fn asset_round_trip_rig_info() {
        let dir = std::env::temp_dir().join("rigforge_io_test_riginfo");
        std::fs::create_dir_all(&dir).unwrap();
        let asset = sample_asset();
        let (mesh_path, rig_path) =
            save_asset(&asset, RigFormat::RigInfo, &dir.join("a")).unwrap();
        let loaded = load_asset(&mesh_path, &rig_path, RigFormat::RigInfo).unwrap();

        assert_eq!(loaded.skeleton.len(), asset.skeleton.len());
        for (a, b) in loaded.skeleton.joints().iter().zip(asset.skeleton.joints()) {
            assert_eq!(a.parent, b.parent);
            assert_eq!(a.name, b.name);
            assert!((a.position - b.position).norm() < 1e-9);
        }
        let (ls, s) = (loaded.skin.unwrap(), asset.skin.clone().unwrap());
        assert_eq!(ls.per_vertex.len(), s.per_vertex.len());
        for (ra, rb) in ls.per_vertex.iter().zip(&s.per_vertex) {
            assert_eq!(ra.len(), rb.len());
            for (&(sa, wa), &(sb, wb)) in ra.iter().zip(rb) {
                assert_eq!(sa, sb);
                assert!((wa - wb).abs() < 1e-9);
            }
        }
        for (a, b) in loaded.mesh.vertices.iter().zip(&asset.mesh.vertices) {
            assert!((a - b).norm() < 1e-9);
        }
        assert_eq!(loaded.mesh.faces, asset.mesh.faces);
    }

    #[test]
    fn asset_round_trip_json() {
        let dir = std::env::temp_dir().join("rigforge_io_test_json");
        std::fs::create_dir_all(&dir).unwrap();
        let asset = sample_asset();
        let (mesh_path, rig_path) = save_asset(&asset, RigFormat::Json, &dir.join("a")).unwrap();
        let loaded = load_asset(&mesh_path, &rig_path, RigFormat::Json).unwrap();
        assert_eq!(loaded.skeleton.len(), asset.skeleton.len());
        for (a, b) in loaded.skeleton.joints().iter().zip(asset.skeleton.joints()) {
            assert_eq!(a.parent, b.parent);
            assert!((a.position - b.position).norm() < 1e-9);
        }
        assert!(loaded.skin.is_some());
    }

    #[test]
    fn duplicate_joint_names_rejected() {
        let mut asset = sample_asset();
        let mut joints = asset.skeleton.joints().to_vec();
        joints[1].name = joints[0].name.clone();
        asset.skeleton = SkeletonTree::from_joints(joints);
        assert!(asset.validate().is_err());
    }
}
