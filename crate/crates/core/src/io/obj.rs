//! Wavefront OBJ subset: `v`, `vn`, `f` records. Everything else is ignored
//! and counted. Polygon faces are fan-triangulated.

use super::IoError;
use crate::skeleton::Mesh;
use nalgebra::Vector3;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Parsed mesh plus the number of ignored records.
#[derive(Debug, Clone)]
pub struct ObjLoad {
    pub mesh: Mesh,
    pub ignored: usize,
}

pub fn load_obj(path: &Path) -> Result<ObjLoad, IoError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);

    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut normals: Vec<Vector3<f64>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut ignored = 0usize;

    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = ln + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        match parts.next() {
            Some("v") => {
                vertices.push(parse_vec3(parts, path, lineno)?);
            }
            Some("vn") => {
                normals.push(parse_vec3(parts, path, lineno)?);
            }
            Some("f") => {
                let mut corner_ids = Vec::new();
                for corner in parts {
                    // Accept i, i/t, i//n, i/t/n; only the vertex index is used.
                    let idx_str = corner.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str.parse().map_err(|_| {
                        IoError::parse(path, lineno, format!("bad face corner '{corner}'"))
                    })?;
                    if idx < 1 {
                        return Err(IoError::parse(
                            path,
                            lineno,
                            format!("unsupported face index {idx} (1-based positive only)"),
                        ));
                    }
                    let id = (idx - 1) as usize;
                    if id >= vertices.len() {
                        return Err(IoError::parse(
                            path,
                            lineno,
                            format!("face references vertex {idx} before it is defined"),
                        ));
                    }
                    corner_ids.push(id);
                }
                if corner_ids.len() < 3 {
                    return Err(IoError::parse(path, lineno, "face with fewer than 3 corners"));
                }
                for i in 1..corner_ids.len() - 1 {
                    faces.push([corner_ids[0], corner_ids[i], corner_ids[i + 1]]);
                }
            }
            _ => ignored += 1,
        }
    }

    let mut mesh = Mesh::new(vertices, faces);
    // Normals are attached only when they line up one-per-vertex.
    if !normals.is_empty() {
        if normals.len() == mesh.vertices.len() {
            for n in &mut normals {
                let len = n.norm();
                if len > 0.0 {
                    *n /= len;
                }
            }
            mesh.normals = Some(normals);
        } else {
            ignored += 1;
        }
    }
    Ok(ObjLoad { mesh, ignored })
}

fn parse_vec3<'a>(
    mut parts: impl Iterator<Item = &'a str>,
    path: &Path,
    lineno: usize,
) -> Result<Vector3<f64>, IoError> {
    let mut out = [0.0f64; 3];
    for slot in &mut out {
        let tok = parts
            .next()
            .ok_or_else(|| IoError::parse(path, lineno, "expected 3 coordinates"))?;
        *slot = tok
            .parse()
            .map_err(|_| IoError::parse(path, lineno, format!("bad number '{tok}'")))?;
    }
    Ok(Vector3::new(out[0], out[1], out[2]))
}

pub fn save_obj(mesh: &Mesh, path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for v in &mesh.vertices {
        writeln!(w, "v {:.9} {:.9} {:.9}", v.x, v.y, v.z)?;
    }
    if let Some(normals) = &mesh.normals {
        for n in normals {
            writeln!(w, "vn {:.9} {:.9} {:.9}", n.x, n.y, n.z)?;
        }
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("rigforge_obj_test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn parses_quads_and_ignores_unknown_records() {
        let p = tmpfile("quad.obj");
        std::fs::write(
            &p,
            "mtllib scene.mtl\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nusemtl m\nf 1 2 3 4\n",
        )
        .unwrap();
        let out = load_obj(&p).unwrap();
        assert_eq!(out.mesh.vertices.len(), 4);
        assert_eq!(out.mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(out.ignored, 2);
    }

    #[test]
    fn parses_slash_face_forms() {
        let p = tmpfile("slash.obj");
        std::fs::write(
            &p,
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvn 0 0 1\nvn 0 0 1\nf 1//1 2//2 3//3\n",
        )
        .unwrap();
        let out = load_obj(&p).unwrap();
        assert_eq!(out.mesh.faces, vec![[0, 1, 2]]);
        assert!(out.mesh.normals.is_some());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let p = tmpfile("bad.obj");
        std::fs::write(&p, "v 0 0 0\nf 1 2 9\n").unwrap();
        let err = load_obj(&p).unwrap_err();
        match err {
            IoError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
