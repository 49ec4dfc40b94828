//! Rig-info text format:
//!
//! ```text
//! joints <name> <x> <y> <z>
//! root <name>
//! skin <vertex> <joint> <weight> [<joint> <weight> ...]
//! hier <parent> <child>
//! ```
//!
//! Joint names are foreign keys in `hier` and `skin`, so duplicates are
//! rejected. Skin weights bind to a joint's slot (the bone ending at that
//! joint; the root's slot for root-bound vertices).

use super::{Asset, IoError};
use crate::skeleton::{Joint, SkeletonTree, SkinWeights};
use nalgebra::Vector3;
use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

type RigContents = (SkeletonTree, Option<SkinWeights>, String);

pub fn load_rig_info(path: &Path) -> Result<RigContents, IoError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);

    let mut names: Vec<String> = Vec::new();
    let mut positions: Vec<Vector3<f64>> = Vec::new();
    let mut index_of: HashMap<String, usize> = HashMap::new();
    let mut root_name: Option<String> = None;
    let mut hier: Vec<(String, String, usize)> = Vec::new();
    let mut skin_rows: Vec<(usize, Vec<(String, f64)>, usize)> = Vec::new();

    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = ln + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        match parts.next() {
            Some("joints") => {
                let name = parts
                    .next()
                    .ok_or_else(|| IoError::parse(path, lineno, "joints: missing name"))?
                    .to_string();
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    let tok = parts.next().ok_or_else(|| {
                        IoError::parse(path, lineno, "joints: expected 3 coordinates")
                    })?;
                    *c = tok.parse().map_err(|_| {
                        IoError::parse(path, lineno, format!("joints: bad number '{tok}'"))
                    })?;
                }
                if index_of.contains_key(&name) {
                    return Err(IoError::parse(
                        path,
                        lineno,
                        format!("duplicate joint name '{name}'"),
                    ));
                }
                index_of.insert(name.clone(), names.len());
                names.push(name);
                positions.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("root") => {
                let name = parts
                    .next()
                    .ok_or_else(|| IoError::parse(path, lineno, "root: missing name"))?;
                if root_name.is_some() {
                    return Err(IoError::parse(path, lineno, "multiple root declarations"));
                }
                root_name = Some(name.to_string());
            }
            Some("hier") => {
                let parent = parts
                    .next()
                    .ok_or_else(|| IoError::parse(path, lineno, "hier: missing parent"))?;
                let child = parts
                    .next()
                    .ok_or_else(|| IoError::parse(path, lineno, "hier: missing child"))?;
                hier.push((parent.to_string(), child.to_string(), lineno));
            }
            Some("skin") => {
                let vtx_tok = parts
                    .next()
                    .ok_or_else(|| IoError::parse(path, lineno, "skin: missing vertex index"))?;
                let vtx: usize = vtx_tok.parse().map_err(|_| {
                    IoError::parse(path, lineno, format!("skin: bad vertex index '{vtx_tok}'"))
                })?;
                let rest: Vec<&str> = parts.collect();
                if rest.is_empty() || rest.len() % 2 != 0 {
                    return Err(IoError::parse(
                        path,
                        lineno,
                        "skin: expected (joint, weight) pairs",
                    ));
                }
                let mut row = Vec::with_capacity(rest.len() / 2);
                for pair in rest.chunks(2) {
                    let w: f64 = pair[1].parse().map_err(|_| {
                        IoError::parse(path, lineno, format!("skin: bad weight '{}'", pair[1]))
                    })?;
                    row.push((pair[0].to_string(), w));
                }
                skin_rows.push((vtx, row, lineno));
            }
            Some(other) => {
                return Err(IoError::parse(
                    path,
                    lineno,
                    format!("unknown record '{other}'"),
                ));
            }
            None => unreachable!(),
        }
    }

    if names.is_empty() {
        return Err(IoError::structure(path, "no joints defined"));
    }
    let root_name =
        root_name.ok_or_else(|| IoError::structure(path, "missing root declaration"))?;
    let root_idx = *index_of
        .get(&root_name)
        .ok_or_else(|| IoError::structure(path, format!("unknown root joint '{root_name}'")))?;

    let mut parents: Vec<Option<usize>> = vec![None; names.len()];
    let mut has_parent = vec![false; names.len()];
    for (parent, child, lineno) in &hier {
        let pi = *index_of.get(parent).ok_or_else(|| {
            IoError::parse(path, *lineno, format!("hier: unknown joint name '{parent}'"))
        })?;
        let ci = *index_of.get(child).ok_or_else(|| {
            IoError::parse(path, *lineno, format!("hier: unknown joint name '{child}'"))
        })?;
        if has_parent[ci] {
            return Err(IoError::parse(
                path,
                *lineno,
                format!("hier: joint '{child}' has two parents"),
            ));
        }
        has_parent[ci] = true;
        parents[ci] = Some(pi);
    }
    if has_parent[root_idx] {
        return Err(IoError::structure(
            path,
            format!("root '{root_name}' appears as a hier child"),
        ));
    }

    let joints: Vec<Joint> = names
        .iter()
        .enumerate()
        .map(|(i, name)| Joint {
            id: i,
            name: name.clone(),
            position: positions[i],
            parent: parents[i],
        })
        .collect();
    let skeleton = SkeletonTree::from_joints(joints);
    let violations = crate::skeleton::validate_tree(&skeleton);
    if let Some(v) = violations.first() {
        return Err(IoError::structure(path, format!("cyclic or broken hier: {}", v.message)));
    }

    let skin = if skin_rows.is_empty() {
        None
    } else {
        let max_vtx = skin_rows.iter().map(|&(v, ..)| v).max().unwrap();
        let mut per_vertex = vec![Vec::new(); max_vtx + 1];
        for (vtx, row, lineno) in skin_rows {
            let mut out = Vec::with_capacity(row.len());
            for (name, w) in row {
                let slot = *index_of.get(&name).ok_or_else(|| {
                    IoError::parse(path, lineno, format!("skin: unknown joint name '{name}'"))
                })?;
                out.push((slot, w));
            }
            out.sort_by_key(|&(slot, _)| slot);
            per_vertex[vtx] = out;
        }
        Some(SkinWeights { per_vertex })
    };

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "asset".into());
    Ok((skeleton, skin, name))
}

pub fn save_rig_info(asset: &Asset, path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let tree = &asset.skeleton;
    for j in tree.joints() {
        writeln!(
            w,
            "joints {} {:.9} {:.9} {:.9}",
            j.name, j.position.x, j.position.y, j.position.z
        )?;
    }
    let root = tree
        .root()
        .ok_or_else(|| IoError::structure(path, "asset skeleton has no root"))?;
    writeln!(w, "root {}", tree.joints()[root].name)?;
    if let Some(skin) = &asset.skin {
        for (vtx, row) in skin.per_vertex.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            write!(w, "skin {vtx}")?;
            for &(slot, weight) in row {
                write!(w, " {} {:.9}", tree.joints()[slot].name, weight)?;
            }
            writeln!(w)?;
        }
    }
    for b in tree.bones() {
        writeln!(
            w,
            "hier {} {}",
            tree.joints()[b.parent].name,
            tree.joints()[b.joint].name
        )?;
    }
    w.flush()?;
    Ok(())
}
