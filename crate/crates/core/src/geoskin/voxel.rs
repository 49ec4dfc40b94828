//! Voxelization of the normalized box with surface/interior/exterior
//! classification.
//!
//! Surface cells are found by conservative triangle-box overlap tests
//! (separating-axis); exterior cells are flood-filled 6-connected from the
//! grid boundary through non-surface cells, so a closed surface shell cannot
//! leak; everything else is interior.

use super::GeoskinError;
use crate::skeleton::Mesh;
use nalgebra::Vector3;
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLabel {
    Surface,
    Interior,
    Exterior,
}

/// A cubic grid over `[-0.5, 0.5]^3` with per-cell occupancy labels.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub resolution: usize,
    pub origin: Vector3<f64>,
    pub cell_size: f64,
    labels: Vec<CellLabel>,
}

impl VoxelGrid {
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.resolution + y) * self.resolution + x
    }

    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let r = self.resolution;
        (idx % r, (idx / r) % r, idx / (r * r))
    }

    pub fn label(&self, x: usize, y: usize, z: usize) -> CellLabel {
        self.labels[self.index(x, y, z)]
    }

    pub fn label_at(&self, idx: usize) -> CellLabel {
        self.labels[idx]
    }

    pub fn cell_count(&self) -> usize {
        self.labels.len()
    }

    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        self.origin
            + Vector3::new(
                (x as f64 + 0.5) * self.cell_size,
                (y as f64 + 0.5) * self.cell_size,
                (z as f64 + 0.5) * self.cell_size,
            )
    }

    /// Space diagonal of one cell.
    pub fn cell_diagonal(&self) -> f64 {
        self.cell_size * 3f64.sqrt()
    }

    /// Cell containing `p`, or `None` outside the grid box.
    pub fn cell_of(&self, p: Vector3<f64>) -> Option<(usize, usize, usize)> {
        let r = self.resolution as f64;
        let mut out = [0usize; 3];
        for a in 0..3 {
            let t = (p[a] - self.origin[a]) / self.cell_size;
            if t < 0.0 || t > r {
                return None;
            }
            out[a] = (t as usize).min(self.resolution - 1);
        }
        Some((out[0], out[1], out[2]))
    }

    /// Counts of (surface, interior, exterior) cells.
    pub fn label_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for l in &self.labels {
            match l {
                CellLabel::Surface => c.0 += 1,
                CellLabel::Interior => c.1 += 1,
                CellLabel::Exterior => c.2 += 1,
            }
        }
        c
    }
}

/// Voxelizes a mesh at resolution `R` over the normalized box.
pub fn voxelize_mesh(mesh: &Mesh, resolution: usize) -> Result<VoxelGrid, GeoskinError> {
    if resolution < 2 {
        return Err(GeoskinError::Config(format!(
            "voxel resolution must be >= 2, got {resolution}"
        )));
    }
    let origin = Vector3::new(-0.5, -0.5, -0.5);
    let cell_size = 1.0 / resolution as f64;
    let mut grid = VoxelGrid {
        resolution,
        origin,
        cell_size,
        labels: vec![CellLabel::Interior; resolution * resolution * resolution],
    };

    // Surface pass.
    let half = Vector3::new(cell_size * 0.5, cell_size * 0.5, cell_size * 0.5);
    for f in &mesh.faces {
        let tri = [
            mesh.vertices[f[0]],
            mesh.vertices[f[1]],
            mesh.vertices[f[2]],
        ];
        let (lo, hi) = tri_bounds(&tri);
        let cell_range = |lo: f64, hi: f64| -> (usize, usize) {
            let a = ((lo - origin.x) / cell_size).floor().max(0.0) as usize;
            let b = ((hi - origin.x) / cell_size).floor().min(resolution as f64 - 1.0);
            (a.min(resolution - 1), if b < 0.0 { 0 } else { b as usize })
        };
        let (x0, x1) = cell_range(lo.x, hi.x);
        let (y0, y1) = cell_range(lo.y, hi.y);
        let (z0, z1) = cell_range(lo.z, hi.z);
        for z in z0..=z1 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let idx = grid.index(x, y, z);
                    if grid.labels[idx] == CellLabel::Surface {
                        continue;
                    }
                    let center = grid.cell_center(x, y, z);
                    if tri_box_overlap(center, half, &tri) {
                        grid.labels[idx] = CellLabel::Surface;
                    }
                }
            }
        }
    }

    // Exterior flood fill, 6-connected from the grid boundary.
    let r = resolution;
    let mut queue = VecDeque::new();
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                if (x == 0 || y == 0 || z == 0 || x == r - 1 || y == r - 1 || z == r - 1)
                    && grid.label(x, y, z) != CellLabel::Surface
                {
                    let idx = grid.index(x, y, z);
                    if grid.labels[idx] != CellLabel::Exterior {
                        grid.labels[idx] = CellLabel::Exterior;
                        queue.push_back((x, y, z));
                    }
                }
            }
        }
    }
    while let Some((x, y, z)) = queue.pop_front() {
        let neighbors = [
            (x.wrapping_sub(1), y, z),
            (x + 1, y, z),
            (x, y.wrapping_sub(1), z),
            (x, y + 1, z),
            (x, y, z.wrapping_sub(1)),
            (x, y, z + 1),
        ];
        for (nx, ny, nz) in neighbors {
            if nx < r && ny < r && nz < r {
                let idx = grid.index(nx, ny, nz);
                if grid.labels[idx] == CellLabel::Interior {
                    grid.labels[idx] = CellLabel::Exterior;
                    queue.push_back((nx, ny, nz));
                }
            }
        }
    }
    Ok(grid)
}

fn tri_bounds(tri: &[Vector3<f64>; 3]) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = tri[0];
    let mut hi = tri[0];
    for p in &tri[1..] {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

/// Separating-axis triangle/axis-aligned-box overlap test.
fn tri_box_overlap(center: Vector3<f64>, half: Vector3<f64>, tri: &[Vector3<f64>; 3]) -> bool {
    let v0 = tri[0] - center;
    let v1 = tri[1] - center;
    let v2 = tri[2] - center;
    let e0 = v1 - v0;
    let e1 = v2 - v1;
    let e2 = v0 - v2;

    // Box axes.
    for a in 0..3 {
        let min = v0[a].min(v1[a]).min(v2[a]);
        let max = v0[a].max(v1[a]).max(v2[a]);
        if min > half[a] || max < -half[a] {
            return false;
        }
    }

    // Nine cross-product axes.
    let edges = [e0, e1, e2];
    let units = [
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
    ];
    for e in &edges {
        for u in &units {
            let axis = u.cross(e);
            if axis.norm_squared() < 1e-24 {
                continue;
            }
            let p0 = v0.dot(&axis);
            let p1 = v1.dot(&axis);
            let p2 = v2.dot(&axis);
            let rbox = half.x * axis.x.abs() + half.y * axis.y.abs() + half.z * axis.z.abs();
            let min = p0.min(p1).min(p2);
            let max = p0.max(p1).max(p2);
            if min > rbox || max < -rbox {
                return false;
            }
        }
    }

    // Triangle plane.
    let normal = e0.cross(&e1);
    let d = normal.dot(&v0);
    let rbox = half.x * normal.x.abs() + half.y * normal.y.abs() + half.z * normal.z.abs();
    d.abs() <= rbox
}
