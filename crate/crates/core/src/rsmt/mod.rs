//! Rectilinear spanning trees and the exact Steiner oracle.

mod oracle;

pub use oracle::{exact_rsmt, OracleSolution, DEFAULT_MAX_DEGREE};

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Point;

pub fn l1_distance(a: Point, b: Point) -> i64 {
    (a.x - b.x).abs() + (a.y - b.y).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreeNodeKind {
    Pin,
    Steiner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreePoint {
    pub point: Point,
    pub kind: TreeNodeKind,
}

impl TreePoint {
    pub fn pin(point: Point) -> Self {
        TreePoint {
            point,
            kind: TreeNodeKind::Pin,
        }
    }

    pub fn steiner(point: Point) -> Self {
        TreePoint {
            point,
            kind: TreeNodeKind::Steiner,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub length: i64,
}

/// A spanning tree over pins and Steiner points with L1 edge lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutedTree {
    pub points: Vec<TreePoint>,
    pub edges: Vec<TreeEdge>,
    pub total_wirelength: i64,
}

impl RoutedTree {
    pub fn steiner_count(&self) -> usize {
        self.points
            .iter()
            .filter(|p| p.kind == TreeNodeKind::Steiner)
            .count()
    }
}

/// Minimum spanning tree edges over the complete L1 graph on `points`.
///
/// Edges are considered in `(length, lower index, higher index)` order, so the
/// result is the same on every platform.
fn kruskal_edges(points: &[Point]) -> Vec<TreeEdge> {
    let n = points.len();
    let mut candidates = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            candidates.push(TreeEdge {
                a,
                b,
                length: l1_distance(points[a], points[b]),
            });
        }
    }
    candidates.sort_unstable_by_key(|e| (e.length, e.a, e.b));

    let mut sets = UnionFind::<usize>::new(n);
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    for e in candidates {
        if sets.union(e.a, e.b) {
            tree.push(e);
            if tree.len() + 1 == n {
                break;
            }
        }
    }
    tree
}

/// Total L1 length of a minimum spanning tree over `points`.
pub fn mst_wirelength(points: &[Point]) -> i64 {
    kruskal_edges(points).iter().map(|e| e.length).sum()
}

pub fn kruskal_mst(points: &[TreePoint]) -> Result<RoutedTree> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let coords: Vec<Point> = points.iter().map(|p| p.point).collect();
    let edges = kruskal_edges(&coords);
    let total_wirelength = edges.iter().map(|e| e.length).sum();
    Ok(RoutedTree {
        points: points.to_vec(),
        edges,
        total_wirelength,
    })
}

/// Routes pins plus the given Steiner points.
pub fn route_points(pins: &[Point], steiner: &[Point]) -> RoutedTree {
    let points: Vec<TreePoint> = pins
        .iter()
        .map(|&p| TreePoint::pin(p))
        .chain(steiner.iter().map(|&p| TreePoint::steiner(p)))
        .collect();
    // `pins` is never empty for a valid net.
    kruskal_mst(&points).expect("route_points called without pins")
}

/// Degree of every point in the tree, indexed like `tree.points`.
pub fn tree_degrees(tree: &RoutedTree) -> Vec<usize> {
    let mut degree = vec![0; tree.points.len()];
    for e in &tree.edges {
        degree[e.a] += 1;
        degree[e.b] += 1;
    }
    degree
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: i64, y: i64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn distance() {
        assert_eq!(l1_distance(p(0, 0), p(0, 0)), 0);
        assert_eq!(l1_distance(p(0, 0), p(3, 4)), 7);
        assert_eq!(l1_distance(p(5, 1), p(2, 9)), l1_distance(p(2, 9), p(5, 1)));
    }

    #[test]
    fn two_point_tree() {
        let t = route_points(&[p(0, 0), p(4, 4)], &[]);
        assert_eq!(t.edges.len(), 1);
        assert_eq!(t.total_wirelength, 8);
        assert_eq!(tree_degrees(&t), vec![1, 1]);
    }

    #[test]
    fn three_points_with_and_without_steiner() {
        let pins = [p(0, 0), p(2, 0), p(1, 2)];
        assert_eq!(route_points(&pins, &[]).total_wirelength, 5);
        let t = route_points(&pins, &[p(1, 0)]);
        assert_eq!(t.total_wirelength, 4);
        assert_eq!(tree_degrees(&t), vec![1, 1, 1, 3]);
    }

    #[test]
    fn star_center_degree() {
        let t = route_points(&[p(0, 5), p(10, 5), p(5, 0)], &[p(5, 5)]);
        assert_eq!(tree_degrees(&t)[3], 3);
    }

    #[test]
    fn on_path_steiner_has_degree_two() {
        // A selected non-Steiner node sitting on the straight run between two pins.
        let t = route_points(&[p(0, 0), p(10, 0)], &[p(4, 0)]);
        assert_eq!(tree_degrees(&t)[2], 2);
        assert_eq!(t.total_wirelength, 10);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(kruskal_mst(&[]), Err(Error::EmptyPointSet)));
        let t = kruskal_mst(&[TreePoint::pin(p(1, 1))]).unwrap();
        assert_eq!(t.total_wirelength, 0);
        assert!(t.edges.is_empty());
    }

    #[test]
    fn tie_break_is_by_index() {
        // Square: all four sides tie at length 2.
        let t = route_points(&[p(0, 0), p(0, 2), p(2, 0), p(2, 2)], &[]);
        let pairs: Vec<(usize, usize)> = t.edges.iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 3)]);
    }
}
