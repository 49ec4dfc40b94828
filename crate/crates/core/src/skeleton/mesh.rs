//! Triangle meshes in normalized space: unit-cube normalization and
//! area-uniform surface sampling.

use super::{SkeletonError, SkeletonTree};
use nalgebra::Vector3;
use rand::Rng;

/// A triangle mesh. Positions are in normalized units once
/// [`normalize_to_unit_cube`] has run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// Optional per-vertex unit normals.
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Self {
        Self { vertices, faces, normals: None }
    }

    /// Axis-aligned bounding box as (min, max); `None` for an empty mesh.
    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        Some((lo, hi))
    }

    /// Checks face index ranges and normal unit length (1e-6).
    pub fn validate(&self) -> Result<(), SkeletonError> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(SkeletonError::Contract(format!(
                    "face {fi} references vertex out of range (vertex count {n})"
                )));
            }
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(SkeletonError::Arity(format!(
                    "normal count {} != vertex count {n}",
                    normals.len()
                )));
            }
            for (i, nv) in normals.iter().enumerate() {
                if (nv.norm() - 1.0).abs() > 1e-6 {
                    return Err(SkeletonError::Contract(format!(
                        "normal {i} is not unit length (|n| = {})",
                        nv.norm()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Unit normal of face `f`; `None` for a degenerate (zero-area) face.
    pub fn face_normal(&self, f: usize) -> Option<Vector3<f64>> {
        let [a, b, c] = self.faces[f];
        let n = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
        let len = n.norm();
        if len <= 0.0 {
            None
        } else {
            Some(n / len)
        }
    }

    /// Per-vertex unit normals: stored ones if present, otherwise
    /// area-weighted face-normal averages (+z for vertices on no face).
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        if let Some(n) = &self.normals {
            return n.clone();
        }
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for face in &self.faces {
            let [a, b, c] = *face;
            // Unnormalized cross product = area weighting.
            let n = (self.vertices[b] - self.vertices[a])
                .cross(&(self.vertices[c] - self.vertices[a]));
            acc[a] += n;
            acc[b] += n;
            acc[c] += n;
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    Vector3::new(0.0, 0.0, 1.0)
                }
            })
            .collect()
    }
}

/// Uniform scale + translation taking an asset into `[-0.5, 0.5]^3` and back.
///
/// `normalize(p) = (p - center) * scale`; the inverse recovers the original
/// frame exactly up to floating-point rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitCubeTransform {
    pub center: Vector3<f64>,
    pub scale: f64,
}

impl UnitCubeTransform {
    pub fn identity() -> Self {
        Self { center: Vector3::zeros(), scale: 1.0 }
    }

    pub fn normalize(&self, p: Vector3<f64>) -> Vector3<f64> {
        (p - self.center) * self.scale
    }

    pub fn denormalize(&self, p: Vector3<f64>) -> Vector3<f64> {
        p / self.scale + self.center
    }
}

/// Normalizes a mesh (and its skeleton) into the unit cube `[-0.5, 0.5]^3`.
///
/// The scale is uniform, `1 / largest axis extent` of the mesh bounding box,
/// so aspect ratio is preserved; the box center maps to the origin. The same
/// transform is applied to the joints.
pub fn normalize_to_unit_cube(
    mesh: &Mesh,
    tree: &SkeletonTree,
) -> Result<(Mesh, SkeletonTree, UnitCubeTransform), SkeletonError> {
    let (lo, hi) = mesh
        .bounds()
        .ok_or_else(|| SkeletonError::Degenerate("empty mesh".into()))?;
    let extent = hi - lo;
    let max_extent = extent.x.max(extent.y).max(extent.z);
    if max_extent <= 0.0 {
        return Err(SkeletonError::Degenerate(
            "mesh has zero extent on all axes".into(),
        ));
    }
    let transform = UnitCubeTransform { center: (lo + hi) * 0.5, scale: 1.0 / max_extent };

    let mut out_mesh = mesh.clone();
    for v in &mut out_mesh.vertices {
        *v = transform.normalize(*v);
    }
    let out_tree = tree.map_positions(|p| transform.normalize(p));
    Ok((out_mesh, out_tree, transform))
}

/// Samples `n` points area-uniformly on the mesh surface, with unit normals
/// taken from the containing face. Zero-area faces are never sampled.
pub fn sample_surface_points(
    mesh: &Mesh,
    n: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>), SkeletonError> {
    if mesh.faces.is_empty() {
        return Err(SkeletonError::Degenerate("mesh has no faces".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(SkeletonError::Degenerate("all faces have zero area".into()));
    }

    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.gen::<f64>() * total;
        let f = cumulative.partition_point(|&c| c <= target).min(mesh.faces.len() - 1);
        let [ia, ib, ic] = mesh.faces[f];
        let (a, b, c) = (mesh.vertices[ia], mesh.vertices[ib], mesh.vertices[ic]);
        // Square-root trick: uniform over the triangle.
        let r1 = rng.gen::<f64>().sqrt();
        let r2 = rng.gen::<f64>();
        let p = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
        let normal = mesh.face_normal(f).expect("sampled face has positive area");
        points.push(p);
        normals.push(normal);
    }
    Ok((points, normals))
}
