//! Uniform-weight Laplacian smoothing over the mesh one-ring.

use crate::skeleton::Mesh;
use nalgebra::Vector3;
use std::collections::HashSet;

/// `v <- v + 0.5 * (mean of one-ring neighbors - v)`, repeated `iterations`
/// times. Isolated vertices stay fixed; connectivity is unchanged. Stored
/// normals are dropped since positions move.
pub fn laplacian_smooth(mesh: &Mesh, iterations: usize) -> Mesh {
    if iterations == 0 {
        return mesh.clone();
    }
    let n = mesh.vertices.len();
    let mut neighbor_sets: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for f in &mesh.faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            neighbor_sets[a].insert(b);
            neighbor_sets[b].insert(a);
        }
    }
    let mut neighbors: Vec<Vec<usize>> = neighbor_sets
        .into_iter()
        .map(|s| {
            let mut v: Vec<usize> = s.into_iter().collect();
            v.sort_unstable();
            v
        })
        .collect();

    let mut positions = mesh.vertices.clone();
    let mut next = positions.clone();
    for _ in 0..iterations {
        for (i, ns) in neighbors.iter_mut().enumerate() {
            if ns.is_empty() {
                next[i] = positions[i];
                continue;
            }
            let mut mean = Vector3::zeros();
            for &j in ns.iter() {
                mean += positions[j];
            }
            mean /= ns.len() as f64;
            next[i] = positions[i] + (mean - positions[i]) * 0.5;
        }
        std::mem::swap(&mut positions, &mut next);
    }

    Mesh { vertices: positions, faces: mesh.faces.clone(), normals: None }
}
