//! Volumetric vertex-to-bone distances routed through the shape interior.
//!
//! The distance is the length of the shortest 26-connected path of
//! non-exterior cells from the vertex's cell to any cell the bone segment
//! passes through, measured between cell centers in normalized units. When
//! no such path exists (disconnected components, or a bone that lies fully
//! in empty space) the Euclidean distance plus a fixed penalty is used.

use super::voxel::{CellLabel, VoxelGrid};
use super::GeoskinError;
use crate::rewards::point_segment_distance;
use nalgebra::Vector3;
use std::collections::BinaryHeap;

/// Added to the Euclidean distance when no interior path exists.
pub const DISCONNECTED_PENALTY: f64 = 1.0;

/// Per-cell shortest-path distances from one bone's cells.
#[derive(Debug, Clone)]
pub struct DistanceField {
    /// `f64::INFINITY` where unreachable (including all exterior cells).
    pub dist: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    cell: usize,
}

impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on distance (ties broken by cell index for determinism).
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.cell.cmp(&self.cell))
    }
}

/// Cells the segment `a..b` passes through, by sub-cell marching. Cells
/// outside the grid box are skipped.
pub fn segment_cells(grid: &VoxelGrid, a: Vector3<f64>, b: Vector3<f64>) -> Vec<usize> {
    let step = grid.cell_size * 0.25;
    let len = (b - a).norm();
    let n = (len / step).ceil() as usize + 1;
    let mut cells = Vec::new();
    let mut last = usize::MAX;
    for i in 0..=n {
        let t = if n == 0 { 0.0 } else { i as f64 / n as f64 };
        let p = a + (b - a) * t;
        if let Some((x, y, z)) = grid.cell_of(p) {
            let idx = grid.index(x, y, z);
            if idx != last && !cells.contains(&idx) {
                cells.push(idx);
                last = idx;
            }
        }
    }
    cells
}

/// Multi-source Dijkstra from a bone's non-exterior cells over the
/// non-exterior 26-connected graph.
pub fn bone_distance_field(
    grid: &VoxelGrid,
    bone_start: Vector3<f64>,
    bone_end: Vector3<f64>,
) -> Result<DistanceField, GeoskinError> {
    let cells = segment_cells(grid, bone_start, bone_end);
    if cells.is_empty() {
        return Err(GeoskinError::Domain(
            "bone segment lies entirely outside the grid box".into(),
        ));
    }
    let sources: Vec<usize> = cells
        .into_iter()
        .filter(|&c| grid.label_at(c) != CellLabel::Exterior)
        .collect();

    let mut dist = vec![f64::INFINITY; grid.cell_count()];
    let mut heap = BinaryHeap::new();
    for &s in &sources {
        dist[s] = 0.0;
        heap.push(HeapEntry { dist: 0.0, cell: s });
    }

    // 26-neighborhood offsets with Euclidean center-to-center weights.
    let r = grid.resolution as isize;
    let mut offsets = Vec::with_capacity(26);
    for dz in -1isize..=1 {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                let w = ((dx * dx + dy * dy + dz * dz) as f64).sqrt() * grid.cell_size;
                offsets.push((dx, dy, dz, w));
            }
        }
    }

    while let Some(HeapEntry { dist: d, cell }) = heap.pop() {
        if d > dist[cell] {
            continue;
        }
        let (x, y, z) = grid.coords(cell);
        let (x, y, z) = (x as isize, y as isize, z as isize);
        for &(dx, dy, dz, w) in &offsets {
            let (nx, ny, nz) = (x + dx, y + dy, z + dz);
            if nx < 0 || ny < 0 || nz < 0 || nx >= r || ny >= r || nz >= r {
                continue;
            }
            let nidx = grid.index(nx as usize, ny as usize, nz as usize);
            if grid.label_at(nidx) == CellLabel::Exterior {
                continue;
            }
            let nd = d + w;
            if nd < dist[nidx] {
                dist[nidx] = nd;
                heap.push(HeapEntry { dist: nd, cell: nidx });
            }
        }
    }
    Ok(DistanceField { dist })
}

/// Looks a vertex up in a bone's distance field, applying the
/// Euclidean-plus-penalty fallback when no path exists.
pub fn hollow_distance_from_field(
    field: &DistanceField,
    grid: &VoxelGrid,
    vertex: Vector3<f64>,
    bone_start: Vector3<f64>,
    bone_end: Vector3<f64>,
) -> Result<f64, GeoskinError> {
    let (x, y, z) = grid
        .cell_of(vertex)
        .ok_or_else(|| GeoskinError::Domain(format!("vertex {vertex:?} outside the grid box")))?;
    let d = field.dist[grid.index(x, y, z)];
    if d.is_finite() {
        Ok(d)
    } else {
        Ok(point_segment_distance(vertex, bone_start, bone_end) + DISCONNECTED_PENALTY)
    }
}

/// Shortest interior path length from `vertex` to the bone segment.
pub fn hollow_distance(
    grid: &VoxelGrid,
    vertex: Vector3<f64>,
    bone_start: Vector3<f64>,
    bone_end: Vector3<f64>,
) -> Result<f64, GeoskinError> {
    let field = bone_distance_field(grid, bone_start, bone_end)?;
    hollow_distance_from_field(&field, grid, vertex, bone_start, bone_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geoskin::voxelize_mesh;
    use crate::skeleton::Mesh;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn box_mesh(lo: Vector3<f64>, hi: Vector3<f64>) -> Mesh {
        let corners = [
            v(lo.x, lo.y, lo.z), v(hi.x, lo.y, lo.z), v(hi.x, hi.y, lo.z), v(lo.x, hi.y, lo.z),
            v(lo.x, lo.y, hi.z), v(hi.x, lo.y, hi.z), v(hi.x, hi.y, hi.z), v(lo.x, hi.y, hi.z),
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
        Mesh::new(corners.to_vec(), faces)
    }

    #[test]
    fn vertex_on_bone_has_near_zero_distance() {
        let mesh = box_mesh(v(-0.4, -0.2, -0.2), v(0.4, 0.2, 0.2));
        let grid = voxelize_mesh(&mesh, 16).unwrap();
        let (a, b) = (v(-0.3, 0.0, 0.0), v(0.3, 0.0, 0.0));
        let d = hollow_distance(&grid, v(0.1, 0.0, 0.0), a, b).unwrap();
        assert!(d <= grid.cell_diagonal());
    }

    #[test]
    fn hollow_lower_bounded_by_euclidean_minus_diagonal() {
        use rand::{Rng, SeedableRng};
        let mesh = box_mesh(v(-0.4, -0.3, -0.3), v(0.4, 0.3, 0.3));
        let grid = voxelize_mesh(&mesh, 16).unwrap();
        let (a, b) = (v(-0.3, 0.0, 0.0), v(0.3, 0.0, 0.0));
        let field = bone_distance_field(&grid, a, b).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = v(
                rng.gen_range(-0.39..0.39),
                rng.gen_range(-0.29..0.29),
                rng.gen_range(-0.29..0.29),
            );
            let d = hollow_distance_from_field(&field, &grid, p, a, b).unwrap();
            let euclid = point_segment_distance(p, a, b);
            assert!(
                d >= euclid - grid.cell_diagonal() - 1e-12,
                "hollow {d} < euclid {euclid} - diagonal at {p:?}"
            );
        }
    }

    #[test]
    fn disconnected_bone_falls_back_to_euclidean_plus_penalty() {
        // Solid box on the left; bone floating in empty space on the right.
        let mesh = box_mesh(v(-0.45, -0.2, -0.2), v(-0.05, 0.2, 0.2));
        let grid = voxelize_mesh(&mesh, 16).unwrap();
        let (a, b) = (v(0.3, 0.0, 0.0), v(0.4, 0.0, 0.0));
        let p = v(-0.2, 0.0, 0.0);
        let d = hollow_distance(&grid, p, a, b).unwrap();
        let expect = point_segment_distance(p, a, b) + DISCONNECTED_PENALTY;
        assert!((d - expect).abs() < 1e-12);
    }

    #[test]
    fn bone_outside_grid_is_domain_error() {
        let mesh = box_mesh(v(-0.2, -0.2, -0.2), v(0.2, 0.2, 0.2));
        let grid = voxelize_mesh(&mesh, 8).unwrap();
        let r = hollow_distance(&grid, v(0.0, 0.0, 0.0), v(2.0, 0.0, 0.0), v(3.0, 0.0, 0.0));
        assert!(r.is_err());
    }

    #[test]
    fn vertex_outside_grid_is_domain_error() {
        let mesh = box_mesh(v(-0.2, -0.2, -0.2), v(0.2, 0.2, 0.2));
        let grid = voxelize_mesh(&mesh, 8).unwrap();
        let r = hollow_distance(&grid, v(0.7, 0.0, 0.0), v(0.0, 0.0, 0.0), v(0.1, 0.0, 0.0));
        assert!(r.is_err());
    }

    /// U-shaped solid: the bone sits in one arm, the query vertex in the
    /// other; the interior path must detour around the gap, matching an
    /// independent exhaustive Dijkstra.
    #[test]
    fn u_shape_detour_matches_oracle() {
        // Two vertical arms joined at the bottom (three boxes).
        let mut mesh = box_mesh(v(-0.45, -0.45, -0.1), v(-0.15, 0.45, 0.1)); // left arm
        let right = box_mesh(v(0.15, -0.45, -0.1), v(0.45, 0.45, 0.1)); // right arm
        let bottom = box_mesh(v(-0.45, -0.45, -0.1), v(0.45, -0.15, 0.1)); // base
        for part in [right, bottom] {
            let off = mesh.vertices.len();
            mesh.vertices.extend(part.vertices);
            mesh.faces
                .extend(part.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        }
        let grid = voxelize_mesh(&mesh, 16).unwrap();

        let (a, b) = (v(0.3, 0.2, 0.0), v(0.3, 0.4, 0.0)); // bone in right arm
        let p = v(-0.3, 0.3, 0.0); // vertex in left arm
        let field = bone_distance_field(&grid, a, b).unwrap();
        let d = hollow_distance_from_field(&field, &grid, p, a, b).unwrap();

        // The straight-line gap is ~0.6 but the interior detour goes down and
        // around the base.
        let euclid = point_segment_distance(p, a, b);
        assert!(d > euclid + 0.3, "expected a detour, hollow {d} vs euclid {euclid}");

        // Independent oracle: naive O(V^2) Dijkstra on the same graph.
        let oracle = {
            let n = grid.cell_count();
            let sources = segment_cells(&grid, a, b);
            let mut dist = vec![f64::INFINITY; n];
            let mut done = vec![false; n];
            for s in sources {
                if grid.label_at(s) != CellLabel::Exterior {
                    dist[s] = 0.0;
                }
            }
            loop {
                let mut best = usize::MAX;
                let mut bd = f64::INFINITY;
                for i in 0..n {
                    if !done[i] && dist[i] < bd {
                        bd = dist[i];
                        best = i;
                    }
                }
                if best == usize::MAX {
                    break;
                }
                done[best] = true;
                let (x, y, z) = grid.coords(best);
                for dz in -1isize..=1 {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            if dx == 0 && dy == 0 && dz == 0 {
                                continue;
                            }
                            let (nx, ny, nz) =
                                (x as isize + dx, y as isize + dy, z as isize + dz);
                            let r = grid.resolution as isize;
                            if nx < 0 || ny < 0 || nz < 0 || nx >= r || ny >= r || nz >= r {
                                continue;
                            }
                            let ni = grid.index(nx as usize, ny as usize, nz as usize);
                            if grid.label_at(ni) == CellLabel::Exterior {
                                continue;
                            }
                            let w = ((dx * dx + dy * dy + dz * dz) as f64).sqrt()
                                * grid.cell_size;
                            if dist[best] + w < dist[ni] {
                                dist[ni] = dist[best] + w;
                            }
                        }
                    }
                }
            }
            let (x, y, z) = grid.cell_of(p).unwrap();
            dist[grid.index(x, y, z)]
        };
        assert_eq!(d, oracle, "heap and naive Dijkstra disagree");
    }
}
