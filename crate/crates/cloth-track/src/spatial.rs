//! Spatial acceleration structures: a kd-tree for nearest-neighbor queries
//! and a uniform hash grid for radius queries between particles.
//!
//! Both are deterministic: results depend only on the input point order,
//! never on hash-map iteration order (the grid's map is used for lookups
//! only; candidate lists are built in index order).

use crate::Vec3;
use std::collections::HashMap;

/// Static 3-d kd-tree over a point set, built once and queried many times.
///
/// Nearest-neighbor results are exact: identical to a brute-force scan,
/// with ties broken by lowest point index.
pub struct KdTree {
    points: Vec<Vec3>,
    /// Point indices, permuted into tree order (subtrees are contiguous).
    order: Vec<u32>,
    nodes: Vec<Node>,
}

struct Node {
    /// Split axis (0..3) and split value; leaves store `axis == LEAF`.
    axis: u8,
    split: f64,
    /// Range of `order` covered by this node.
    start: u32,
    end: u32,
    /// Children indices into `nodes`; unused for leaves.
    left: u32,
    right: u32,
}

const LEAF: u8 = 3;
const LEAF_SIZE: usize = 16;

impl KdTree {
    /// Builds a tree over `points`. Empty input yields a tree whose queries
    /// return `None`.
    pub fn build(points: &[Vec3]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            let n = points.len();
            build_node(points, &mut order, 0, n, &mut nodes);
        }
        KdTree { points: points.to_vec(), order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and squared distance of the point nearest to `query`.
    pub fn nearest(&self, query: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (u32::MAX, f64::INFINITY);
        self.search(0, query, &mut best);
        Some((best.0 as usize, best.1))
    }

    fn search(&self, node_idx: usize, query: &Vec3, best: &mut (u32, f64)) {
        let node = &self.nodes[node_idx];
        if node.axis == LEAF {
            for &i in &self.order[node.start as usize..node.end as usize] {
                let d = (self.points[i as usize] - query).norm_squared();
                // Strict inequality on distance plus index comparison keeps
                // the tie-break identical to a brute-force forward scan.
                if d < best.1 || (d == best.1 && i < best.0) {
                    *best = (i, d);
                }
            }
            return;
        }
        let delta = query[node.axis as usize] - node.split;
        let (near, far) = if delta <= 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search(near as usize, query, best);
        // The far side can still contain an equidistant lower index, so
        // recurse on <= rather than <.
        if delta * delta <= best.1 {
            self.search(far as usize, query, best);
        }
    }
}

fn build_node(points: &[Vec3], order: &mut [u32], start: usize, end: usize, nodes: &mut Vec<Node>) -> u32 {
    let my_idx = nodes.len() as u32;
    nodes.push(Node { axis: LEAF, split: 0.0, start: start as u32, end: end as u32, left: 0, right: 0 });
    let count = end - start;
    if count <= LEAF_SIZE {
        return my_idx;
    }

    // Split along the widest axis of the bounding box.
    let mut lo = Vec3::from_element(f64::INFINITY);
    let mut hi = Vec3::from_element(f64::NEG_INFINITY);
    for &i in &order[start..end] {
        let p = points[i as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = hi - lo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    if extent[axis] == 0.0 {
        // All points coincide; keep as a (large) leaf.
        return my_idx;
    }

    let mid = start + count / 2;
    // Order by coordinate, then by index so the permutation is unique.
    order[start..end].sort_unstable_by(|&a, &b| {
        points[a as usize][axis]
            .partial_cmp(&points[b as usize][axis])
            .unwrap()
            .then(a.cmp(&b))
    });
    let split = points[order[mid] as usize][axis];

    let left = build_node(points, order, start, mid, nodes);
    let right = build_node(points, order, mid, end, nodes);
    let node = &mut nodes[my_idx as usize];
    node.axis = axis as u8;
    node.split = split;
    node.left = left;
    node.right = right;
    my_idx
}

/// Uniform hash grid for finding particle pairs closer than a radius.
pub struct HashGrid {
    cell: f64,
    map: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl HashGrid {
    /// Bins `points` into cells of side `cell` (typically the query radius).
    pub fn build(points: &[Vec3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut map: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            map.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        HashGrid { cell, map }
    }

    fn key(p: &Vec3, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// All unordered pairs `(i, j)` with `i < j` and `|p_i - p_j| < radius`,
    /// in lexicographic order. `radius` must not exceed the cell size.
    pub fn pairs_within(&self, points: &[Vec3], radius: f64) -> Vec<(usize, usize)> {
        assert!(radius <= self.cell + 1e-15, "radius exceeds grid cell size");
        let r2 = radius * radius;
        let mut out = Vec::new();
        for (i, p) in points.iter().enumerate() {
            let (cx, cy, cz) = Self::key(p, self.cell);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = self.map.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &j in bucket {
                            let j = j as usize;
                            if j <= i {
                                continue;
                            }
                            if (points[j] - p).norm_squared() < r2 {
                                out.push((i, j));
                            }
                        }
                    }
                }
            }
        }
        // Bucket scan emits j out of order within a cell neighborhood.
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64, scale: f64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-scale..scale),
                    rng.gen_range(-scale..scale),
                    rng.gen_range(-scale..scale),
                )
            })
            .collect()
    }

    fn brute_nearest(points: &[Vec3], q: &Vec3) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn kdtree_matches_brute_force() {
        for seed in 0..5 {
            let points = random_points(500, seed, 1.0);
            let tree = KdTree::build(&points);
            let queries = random_points(200, seed + 100, 1.2);
            for q in &queries {
                let (ti, td) = tree.nearest(&q).unwrap();
                let (bi, bd) = brute_nearest(&points, &q);
                assert_eq!(ti, bi);
                assert_eq!(td.to_bits(), bd.to_bits());
            }
        }
    }

    #[test]
    fn kdtree_handles_degenerate_inputs() {
        assert!(KdTree::build(&[]).nearest(&Vec3::zeros()).is_none());

        let one = vec![Vec3::new(1.0, 2.0, 3.0)];
        assert_eq!(KdTree::build(&one).nearest(&Vec3::zeros()).unwrap().0, 0);

        // Many coincident points: lowest index wins.
        let coincident = vec![Vec3::new(0.5, 0.5, 0.5); 100];
        let tree = KdTree::build(&coincident);
        assert_eq!(tree.nearest(&Vec3::zeros()).unwrap().0, 0);

        // Points on a line (zero extent on two axes).
        let line: Vec<Vec3> = (0..100).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let tree = KdTree::build(&line);
        assert_eq!(tree.nearest(&Vec3::new(41.4, 5.0, 5.0)).unwrap().0, 41);
    }

    #[test]
    fn kdtree_tie_break_is_lowest_index() {
        // Two points equidistant from the query on opposite sides.
        let points = vec![Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        let tree = KdTree::build(&points);
        assert_eq!(tree.nearest(&Vec3::zeros()).unwrap().0, 0);
        let swapped = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        let tree = KdTree::build(&swapped);
        assert_eq!(tree.nearest(&Vec3::zeros()).unwrap().0, 0);
    }

    fn brute_pairs(points: &[Vec3], radius: f64) -> Vec<(usize, usize)> {
        let r2 = radius * radius;
        let mut out = Vec::new();
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if (points[j] - points[i]).norm_squared() < r2 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn hashgrid_matches_brute_force() {
        for seed in 0..5 {
            // Dense enough that many pairs exist.
            let points = random_points(300, seed, 0.05);
            let radius = 0.01;
            let grid = HashGrid::build(&points, radius);
            assert_eq!(grid.pairs_within(&points, radius), brute_pairs(&points, radius));
        }
    }

    #[test]
    fn hashgrid_pairs_span_cell_boundaries() {
        // Two points in adjacent cells but within the radius.
        let points = vec![Vec3::new(0.0099, 0.0, 0.0), Vec3::new(0.0101, 0.0, 0.0)];
        let grid = HashGrid::build(&points, 0.01);
        assert_eq!(grid.pairs_within(&points, 0.01), vec![(0, 1)]);

        // Exactly at the radius: excluded (strict inequality).
        let points = vec![Vec3::zeros(), Vec3::new(0.01, 0.0, 0.0)];
        let grid = HashGrid::build(&points, 0.01);
        assert!(grid.pairs_within(&points, 0.01).is_empty());
    }

    #[test]
    fn hashgrid_negative_coordinates() {
        let points = vec![Vec3::new(-0.001, -0.001, -0.001), Vec3::new(0.001, 0.001, 0.001)];
        let grid = HashGrid::build(&points, 0.01);
        assert_eq!(grid.pairs_within(&points, 0.01), vec![(0, 1)]);
    }
}
