//! Cloth topology and per-timestep state.
//!
//! A cloth is a rectangular grid of particles connected by distance
//! constraints of three kinds: structural (4-neighbor), shear (diagonal),
//! and bending (two-apart along a row or column). The topology is fixed for
//! the lifetime of a trajectory; only vertex positions and velocities change.

use crate::error::{Error, Result};
use crate::Vec3;
use serde::{Deserialize, Serialize};

/// Role of an edge in the grid. Bending edges are plain distance constraints
/// between second neighbors, the simplest analog of a particle-based cloth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    Structural,
    Shear,
    Bending,
}

/// Fixed cloth topology: rest positions, undirected edges, rest lengths.
///
/// Invariants (checked by [`ClothMesh::validate`]):
/// - every edge index is in range, no self-edges, no duplicate edges
///   (each undirected pair stored once, `a < b`);
/// - `rest_lengths[e]` equals the rest-position distance of edge `e`'s
///   endpoints within 1e-9 m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClothMesh {
    pub num_x: usize,
    pub num_y: usize,
    /// Grid spacing in meters.
    pub spacing: f64,
    /// Rest positions, row-major (`y * num_x + x`).
    pub vertices: Vec<Vec3>,
    /// Undirected edges, each stored once with `edges[e].0 < edges[e].1`.
    pub edges: Vec<(usize, usize)>,
    pub edge_kinds: Vec<EdgeKind>,
    /// Rest length per edge in meters.
    pub rest_lengths: Vec<f64>,
}

impl ClothMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Row-major vertex index for grid coordinates.
    pub fn grid_index(&self, x: usize, y: usize) -> usize {
        y * self.num_x + x
    }

    /// Indices of the vertices on the grid boundary, ascending.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for y in 0..self.num_y {
            for x in 0..self.num_x {
                if x == 0 || y == 0 || x == self.num_x - 1 || y == self.num_y - 1 {
                    out.push(self.grid_index(x, y));
                }
            }
        }
        out
    }

    /// True if `a` and `b` are connected by any edge (structural, shear, or
    /// bending). Used to exclude constrained pairs from collision handling.
    pub fn adjacency_set(&self) -> std::collections::HashSet<(usize, usize)> {
        self.edges.iter().copied().collect()
    }

    /// Checks all topology invariants. Meshes built by [`build_grid_cloth`]
    /// always pass; this guards meshes loaded from files.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.edges.len() != self.rest_lengths.len() || self.edges.len() != self.edge_kinds.len()
        {
            return Err(Error::DimensionMismatch {
                context: "edge arrays",
                expected: self.edges.len(),
                got: self.rest_lengths.len().min(self.edge_kinds.len()),
            });
        }
        let mut seen = std::collections::HashSet::with_capacity(self.edges.len());
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::InvalidParam(format!(
                    "edge {e} references vertex out of range ({a}, {b}) with {n} vertices"
                )));
            }
            if a == b {
                return Err(Error::InvalidParam(format!("edge {e} is a self-edge on {a}")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::InvalidParam(format!("duplicate edge ({a}, {b})")));
            }
            let d = (self.vertices[a] - self.vertices[b]).norm();
            if (d - self.rest_lengths[e]).abs() > 1e-9 {
                return Err(Error::InvalidParam(format!(
                    "edge {e} rest length {} does not match rest-position distance {d}",
                    self.rest_lengths[e]
                )));
            }
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("mesh vertices"));
        }
        Ok(())
    }

    /// A state with every vertex at its rest position and zero velocity.
    pub fn rest_state(&self) -> ClothState {
        ClothState {
            positions: self.vertices.clone(),
            velocities: vec![Vec3::zeros(); self.vertices.len()],
            time_index: 0,
        }
    }
}

/// Positions and velocities of every vertex at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClothState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub time_index: usize,
}

impl ClothState {
    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    /// Checks that the state matches `mesh` and contains only finite values.
    pub fn validate(&self, mesh: &ClothMesh) -> Result<()> {
        if self.positions.len() != mesh.num_vertices() {
            return Err(Error::DimensionMismatch {
                context: "state positions vs mesh",
                expected: mesh.num_vertices(),
                got: self.positions.len(),
            });
        }
        if self.velocities.len() != self.positions.len() {
            return Err(Error::DimensionMismatch {
                context: "state velocities vs positions",
                expected: self.positions.len(),
                got: self.velocities.len(),
            });
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("cloth state"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.positions
            .iter()
            .chain(self.velocities.iter())
            .all(|v| v.iter().all(|c| c.is_finite()))
    }

    /// Center of mass assuming equal vertex masses.
    pub fn center_of_mass(&self) -> Vec3 {
        let sum: Vec3 = self.positions.iter().sum();
        sum / self.positions.len() as f64
    }
}

/// Builds a flat rectangular grid cloth at height 0.
///
/// Structural edges connect 4-neighbors, shear edges connect cell diagonals,
/// bending edges connect vertices two apart in the same row or column. Rest
/// lengths are computed from the rest positions. Construction is
/// deterministic: identical inputs produce bit-identical meshes.
pub fn build_grid_cloth(num_x: usize, num_y: usize, spacing: f64) -> Result<ClothMesh> {
    if num_x < 2 || num_y < 2 {
        return Err(Error::InvalidParam(format!(
            "grid must be at least 2x2, got {num_x}x{num_y}"
        )));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::InvalidParam(format!("spacing must be positive, got {spacing}")));
    }

    let mut vertices = Vec::with_capacity(num_x * num_y);
    for y in 0..num_y {
        for x in 0..num_x {
            vertices.push(Vec3::new(x as f64 * spacing, y as f64 * spacing, 0.0));
        }
    }

    let idx = |x: usize, y: usize| y * num_x + x;
    let mut edges = Vec::new();
    let mut edge_kinds = Vec::new();
    let mut push = |a: usize, b: usize, kind: EdgeKind| {
        edges.push((a.min(b), a.max(b)));
        edge_kinds.push(kind);
    };

    // Structural: 4-neighbor.
    for y in 0..num_y {
        for x in 0..num_x {
            if x + 1 < num_x {
                push(idx(x, y), idx(x + 1, y), EdgeKind::Structural);
            }
            if y + 1 < num_y {
                push(idx(x, y), idx(x, y + 1), EdgeKind::Structural);
            }
        }
    }
    // Shear: both diagonals of each cell.
    for y in 0..num_y.saturating_sub(1) {
        for x in 0..num_x.saturating_sub(1) {
            push(idx(x, y), idx(x + 1, y + 1), EdgeKind::Shear);
            push(idx(x + 1, y), idx(x, y + 1), EdgeKind::Shear);
        }
    }
    // Bending: two apart along rows and columns.
    for y in 0..num_y {
        for x in 0..num_x {
            if x + 2 < num_x {
                push(idx(x, y), idx(x + 2, y), EdgeKind::Bending);
            }
            if y + 2 < num_y {
                push(idx(x, y), idx(x, y + 2), EdgeKind::Bending);
            }
        }
    }

    let rest_lengths = edges
        .iter()
        .map(|&(a, b)| (vertices[a] - vertices[b]).norm())
        .collect();

    let mesh = ClothMesh {
        num_x,
        num_y,
        spacing,
        vertices,
        edges,
        edge_kinds,
        rest_lengths,
    };
    debug_assert!(mesh.validate().is_ok());
    Ok(mesh)
}

/// Index of the vertex closest to `point`; ties broken by lowest index.
pub fn nearest_vertex(state: &ClothState, point: &Vec3) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, p) in state.positions.iter().enumerate() {
        let d = (p - point).norm_squared();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive enumeration over index pairs: classifies every possible
    /// vertex pair of a grid by its lattice offset. Independent of the
    /// constructor's loop structure.
    fn enumerate_expected_edges(num_x: usize, num_y: usize) -> (usize, usize, usize) {
        let (mut structural, mut shear, mut bending) = (0, 0, 0);
        let n = num_x * num_y;
        for a in 0..n {
            for b in (a + 1)..n {
                let (ax, ay) = (a % num_x, a / num_x);
                let (bx, by) = (b % num_x, b / num_x);
                let dx = (ax as i64 - bx as i64).abs();
                let dy = (ay as i64 - by as i64).abs();
                match (dx, dy) {
                    (1, 0) | (0, 1) => structural += 1,
                    (1, 1) => shear += 1,
                    (2, 0) | (0, 2) => bending += 1,
                    _ => {}
                }
            }
        }
        (structural, shear, bending)
    }

    fn count_kinds(mesh: &ClothMesh) -> (usize, usize, usize) {
        let c = |k| mesh.edge_kinds.iter().filter(|&&x| x == k).count();
        (
            c(EdgeKind::Structural),
            c(EdgeKind::Shear),
            c(EdgeKind::Bending),
        )
    }

    #[test]
    fn grid_2x2_edge_counts() {
        let mesh = build_grid_cloth(2, 2, 0.01).unwrap();
        assert_eq!(mesh.num_vertices(), 4);
        assert_eq!(count_kinds(&mesh), (4, 2, 0));
        assert_eq!(mesh.num_edges(), 6);
        assert_eq!(count_kinds(&mesh), enumerate_expected_edges(2, 2));
    }

    #[test]
    fn grid_2x2_rest_lengths() {
        let mesh = build_grid_cloth(2, 2, 0.01).unwrap();
        for (e, &(a, b)) in mesh.edges.iter().enumerate() {
            let expected = match mesh.edge_kinds[e] {
                EdgeKind::Structural => 0.01,
                EdgeKind::Shear => 0.01 * 2.0_f64.sqrt(),
                EdgeKind::Bending => 0.02,
            };
            assert!((mesh.rest_lengths[e] - expected).abs() < 1e-12, "edge ({a},{b})");
        }
    }

    #[test]
    fn grid_3x3_edge_counts_vs_enumeration() {
        let mesh = build_grid_cloth(3, 3, 0.01).unwrap();
        assert_eq!(mesh.num_vertices(), 9);
        assert_eq!(count_kinds(&mesh), (12, 8, 6));
        assert_eq!(mesh.num_edges(), 26);
        assert_eq!(count_kinds(&mesh), enumerate_expected_edges(3, 3));
    }

    #[test]
    fn larger_grids_match_enumeration() {
        for (nx, ny) in [(2, 5), (4, 3), (5, 6), (7, 2)] {
            let mesh = build_grid_cloth(nx, ny, 0.013).unwrap();
            assert_eq!(count_kinds(&mesh), enumerate_expected_edges(nx, ny), "{nx}x{ny}");
            mesh.validate().unwrap();
        }
    }

    #[test]
    fn interior_vertex_degrees() {
        let mesh = build_grid_cloth(5, 6, 0.01).unwrap();
        let mut deg_structural = vec![0usize; mesh.num_vertices()];
        let mut deg_shear = vec![0usize; mesh.num_vertices()];
        let mut deg_bending = vec![0usize; mesh.num_vertices()];
        for (e, &(a, b)) in mesh.edges.iter().enumerate() {
            let deg = match mesh.edge_kinds[e] {
                EdgeKind::Structural => &mut deg_structural,
                EdgeKind::Shear => &mut deg_shear,
                EdgeKind::Bending => &mut deg_bending,
            };
            deg[a] += 1;
            deg[b] += 1;
        }
        for y in 1..5 {
            for x in 1..4 {
                let i = mesh.grid_index(x, y);
                assert_eq!(deg_structural[i], 4);
                assert_eq!(deg_shear[i], 4);
                assert!(deg_bending[i] <= 4);
            }
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_grid_cloth(6, 4, 0.0123).unwrap();
        let b = build_grid_cloth(6, 4, 0.0123).unwrap();
        assert_eq!(a, b);
        for (va, vb) in a.vertices.iter().zip(&b.vertices) {
            for k in 0..3 {
                assert_eq!(va[k].to_bits(), vb[k].to_bits());
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_grid_cloth(1, 2, 0.01).is_err());
        assert!(build_grid_cloth(2, 1, 0.01).is_err());
        assert!(build_grid_cloth(2, 2, 0.0).is_err());
        assert!(build_grid_cloth(2, 2, -1.0).is_err());
        assert!(build_grid_cloth(2, 2, f64::NAN).is_err());
    }

    #[test]
    fn nearest_vertex_basics() {
        let single = ClothState {
            positions: vec![Vec3::new(1.0, 2.0, 3.0)],
            velocities: vec![Vec3::zeros()],
            time_index: 0,
        };
        assert_eq!(nearest_vertex(&single, &Vec3::new(-10.0, 0.0, 50.0)), 0);

        let two = ClothState {
            positions: vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)],
            velocities: vec![Vec3::zeros(); 2],
            time_index: 0,
        };
        assert_eq!(nearest_vertex(&two, &Vec3::new(0.4, 0.0, 0.0)), 0);
        assert_eq!(nearest_vertex(&two, &Vec3::new(0.6, 0.0, 0.0)), 1);

        let coincident = ClothState {
            positions: vec![Vec3::new(1.0, 1.0, 0.0); 2],
            velocities: vec![Vec3::zeros(); 2],
            time_index: 0,
        };
        assert_eq!(nearest_vertex(&coincident, &Vec3::new(5.0, -2.0, 0.1)), 0);
    }

    #[test]
    fn validate_catches_broken_meshes() {
        let mut mesh = build_grid_cloth(3, 3, 0.01).unwrap();
        mesh.edges[0] = (0, 0);
        assert!(mesh.validate().is_err());

        let mut mesh = build_grid_cloth(3, 3, 0.01).unwrap();
        mesh.edges[1] = mesh.edges[0];
        assert!(mesh.validate().is_err());

        let mut mesh = build_grid_cloth(3, 3, 0.01).unwrap();
        mesh.rest_lengths[0] += 1e-6;
        assert!(mesh.validate().is_err());

        let mut mesh = build_grid_cloth(3, 3, 0.01).unwrap();
        mesh.edges[0] = (0, 99);
        assert!(mesh.validate().is_err());
    }
}
