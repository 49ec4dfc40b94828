//! Native JSON skeleton document:
//!
//! ```json
//! {
//!   "name": "biped",
//!   "joints": [{"id": 0, "name": "pelvis", "position": [x, y, z], "parent": null}, ...],
//!   "skin": {"vertex_weights": [[[slot, w], ...], ...]}
//! }
//! ```
//!
//! `parent` is `null` for the root; `skin` is optional.

use super::{Asset, IoError};
use crate::skeleton::{Joint, SkeletonTree, SkinWeights};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct JointDoc {
    id: usize,
    name: String,
    position: [f64; 3],
    parent: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SkinDoc {
    vertex_weights: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RigDoc {
    name: String,
    joints: Vec<JointDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    skin: Option<SkinDoc>,
}

type RigContents = (SkeletonTree, Option<SkinWeights>, String);

pub fn load_json_rig(path: &Path) -> Result<RigContents, IoError> {
    let text = std::fs::read_to_string(path)?;
    let doc: RigDoc = serde_json::from_str(&text)?;
    for (i, j) in doc.joints.iter().enumerate() {
        if j.id != i {
            return Err(IoError::structure(
                path,
                format!("joint ids must be dense and ordered; slot {i} holds id {}", j.id),
            ));
        }
    }
    let joints = doc
        .joints
        .into_iter()
        .map(|j| Joint {
            id: j.id,
            name: j.name,
            position: nalgebra::Vector3::new(j.position[0], j.position[1], j.position[2]),
            parent: j.parent,
        })
        .collect();
    let skeleton = SkeletonTree::from_joints(joints);
    let violations = crate::skeleton::validate_tree(&skeleton);
    if let Some(v) = violations.first() {
        return Err(IoError::structure(path, v.message.clone()));
    }
    let skin = doc.skin.map(|s| SkinWeights { per_vertex: s.vertex_weights });
    Ok((skeleton, skin, doc.name))
}

pub fn save_json_rig(asset: &Asset, path: &Path) -> Result<(), IoError> {
    let doc = RigDoc {
        name: asset.name.clone(),
        joints: asset
            .skeleton
            .joints()
            .iter()
            .map(|j| JointDoc {
                id: j.id,
                name: j.name.clone(),
                position: [j.position.x, j.position.y, j.position.z],
                parent: j.parent,
            })
            .collect(),
        skin: asset.skin.as_ref().map(|s| SkinDoc { vertex_weights: s.per_vertex.clone() }),
    };
    let text = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
