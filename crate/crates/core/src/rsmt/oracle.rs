//! Exact rectilinear Steiner minimal trees for small nets.
//!
//! The optimum is the minimum, over subsets `S` of Hanan candidate nodes with
//! `|S| <= n - 2`, of the L1 spanning-tree length of `pins ∪ S`. Among optimal
//! subsets the one with the fewest points wins, then the lexicographically
//! smallest list of canonical indices.
//!
//! Two stages keep this tractable up to degree 9:
//!
//! 1. A Dreyfus–Wagner pass over the Hanan grid graph gives the optimal
//!    length and, for every node `v`, the cheapest tree over the pins in
//!    which `v` joins at least three pin-carrying branches.
//! 2. Subsets are enumerated by size, in lexicographic order, over only those
//!    candidates whose three-branch cost equals the optimum. The first subset
//!    whose spanning tree reaches the optimum is returned.
//!
//! Stage 2 is exact: in a minimum-cardinality optimal subset every point has
//! spanning-tree degree at least three (a leaf can be dropped, a degree-2
//! point shortcut), and realizing the tree edges as staircase paths yields an
//! optimal grid tree in which those points are branch nodes.

use crate::error::{Error, Result};
use crate::net::{build_hanan_grid, HananGrid, Net, Point};

use super::{l1_distance, mst_wirelength, route_points, RoutedTree};

pub const DEFAULT_MAX_DEGREE: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSolution {
    pub optimal_wirelength: i64,
    /// Canonical grid indices of the chosen Steiner points, ascending.
    pub steiner_set: Vec<usize>,
    pub tree: RoutedTree,
}

/// Solves a net exactly. `max_degree` guards the exponential stages; pass a
/// larger value to override.
pub fn exact_rsmt(net: &Net, max_degree: usize) -> Result<OracleSolution> {
    if net.degree() > max_degree {
        return Err(Error::DegreeTooLarge {
            max_degree,
            ids: vec![net.id()],
        });
    }
    let grid = build_hanan_grid(net);
    let pins = net.pins();
    let mst_only = mst_wirelength(pins);

    if pins.len() <= 2 || grid.candidate_indices().is_empty() {
        return Ok(OracleSolution {
            optimal_wirelength: mst_only,
            steiner_set: Vec::new(),
            tree: route_points(pins, &[]),
        });
    }

    let tables = SteinerTables::solve(&grid, pins);
    let optimum = tables.optimum();
    debug_assert!(optimum <= mst_only);

    let pool: Vec<usize> = grid
        .candidate_indices()
        .into_iter()
        .filter(|&v| tables.three_branch_cost(v) == optimum)
        .collect();

    let max_size = (pins.len() - 2).min(pool.len());
    let mut points: Vec<Point> = pins.to_vec();
    for size in 0..=max_size {
        let mut found = None;
        for_each_combination(pool.len(), size, |combo| {
            points.truncate(pins.len());
            points.extend(combo.iter().map(|&k| grid.point(pool[k])));
            if mst_wirelength(&points) == optimum {
                found = Some(combo.iter().map(|&k| pool[k]).collect::<Vec<_>>());
                false
            } else {
                true
            }
        });
        if let Some(steiner_set) = found {
            let steiner: Vec<Point> = steiner_set.iter().map(|&i| grid.point(i)).collect();
            let tree = route_points(pins, &steiner);
            debug_assert_eq!(tree.total_wirelength, optimum);
            return Ok(OracleSolution {
                optimal_wirelength: optimum,
                steiner_set,
                tree,
            });
        }
    }
    unreachable!("no candidate subset reached the grid optimum {optimum} for net {}", net.id())
}

/// Visits all `size`-subsets of `0..n` in lexicographic order until `visit`
/// returns false.
fn for_each_combination(n: usize, size: usize, mut visit: impl FnMut(&[usize]) -> bool) {
    if size > n {
        return;
    }
    let mut combo: Vec<usize> = (0..size).collect();
    'next: loop {
        if !visit(&combo) {
            return;
        }
        // Advance the rightmost position that still has room.
        for i in (0..size).rev() {
            if combo[i] < n - size + i {
                combo[i] += 1;
                for j in i + 1..size {
                    combo[j] = combo[j - 1] + 1;
                }
                continue 'next;
            }
        }
        return;
    }
}

/// Dreyfus–Wagner tables over the Hanan grid.
///
/// `tree[mask][v]` is the cheapest grid tree spanning the pins in `mask` and
/// node `v`; `joined[mask][v]` is the cheapest such tree in which `v` splits
/// `mask` into two non-empty parts. Grid shortest paths are L1 distances.
struct SteinerTables {
    nodes: usize,
    full: usize,
    tree: Vec<i64>,
    joined: Vec<i64>,
}

impl SteinerTables {
    fn solve(grid: &HananGrid, pins: &[Point]) -> Self {
        let nodes = grid.node_count();
        let points: Vec<Point> = grid.nodes().iter().map(|n| n.0).collect();
        let k = pins.len();
        let masks = 1usize << k;
        let mut tree = vec![i64::MAX; masks * nodes];
        let mut joined = vec![i64::MAX; masks * nodes];

        for (t, &pin) in pins.iter().enumerate() {
            let row = (1 << t) * nodes;
            for v in 0..nodes {
                tree[row + v] = l1_distance(pin, points[v]);
            }
        }

        for mask in 1..masks {
            if mask.count_ones() < 2 {
                continue;
            }
            let low = mask & mask.wrapping_neg();
            let row = mask * nodes;
            // Split into a part holding the lowest pin and its complement.
            let rest = mask ^ low;
            let mut sub = rest;
            loop {
                let a = sub | low;
                if a != mask {
                    let b = mask ^ a;
                    let (ra, rb) = (a * nodes, b * nodes);
                    for v in 0..nodes {
                        let cost = tree[ra + v] + tree[rb + v];
                        if cost < joined[row + v] {
                            joined[row + v] = cost;
                        }
                    }
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
            for v in 0..nodes {
                let mut best = i64::MAX;
                for u in 0..nodes {
                    let cost = joined[row + u] + l1_distance(points[u], points[v]);
                    if cost < best {
                        best = cost;
                    }
                }
                tree[row + v] = best;
            }
        }

        SteinerTables {
            nodes,
            full: masks - 1,
            tree,
            joined,
        }
    }

    fn optimum(&self) -> i64 {
        // Smallest over all nodes, which is attained at every pin.
        let row = self.full * self.nodes;
        self.tree[row..row + self.nodes].iter().copied().min().unwrap()
    }

    /// Cheapest tree over all pins in which `v` has at least three
    /// pin-carrying branches.
    fn three_branch_cost(&self, v: usize) -> i64 {
        let mut best = i64::MAX;
        for a in 1..self.full {
            let b = self.full ^ a;
            if b.count_ones() < 2 {
                continue;
            }
            let cost = self.tree[a * self.nodes + v].saturating_add(self.joined[b * self.nodes + v]);
            best = best.min(cost);
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(pins: &[(i64, i64)]) -> Net {
        Net::new(0, pins.iter().map(|&p| Point::from(p))).unwrap()
    }

    #[test]
    fn combinations_in_lexicographic_order() {
        let mut seen = Vec::new();
        for_each_combination(4, 2, |c| {
            seen.push(c.to_vec());
            true
        });
        assert_eq!(
            seen,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        let mut count = 0;
        for_each_combination(3, 0, |c| {
            assert!(c.is_empty());
            count += 1;
            true
        });
        assert_eq!(count, 1);
        for_each_combination(2, 3, |_| panic!("no 3-subsets of 2 items"));
    }

    #[test]
    fn collinear_needs_no_steiner() {
        let s = exact_rsmt(&net(&[(0, 0), (1, 0), (2, 0)]), DEFAULT_MAX_DEGREE).unwrap();
        assert!(s.steiner_set.is_empty());
        assert_eq!(s.optimal_wirelength, 2);
    }

    #[test]
    fn three_pin_t_junction() {
        let n = net(&[(0, 0), (2, 0), (1, 2)]);
        let s = exact_rsmt(&n, DEFAULT_MAX_DEGREE).unwrap();
        let g = build_hanan_grid(&n);
        assert_eq!(s.optimal_wirelength, 4);
        assert_eq!(s.steiner_set, vec![g.index_of(Point::new(1, 0)).unwrap()]);
        assert_eq!(s.tree.total_wirelength, 4);
    }

    #[test]
    fn cross_needs_one_center_point() {
        let n = net(&[(0, 5), (10, 5), (5, 0), (5, 10)]);
        let s = exact_rsmt(&n, DEFAULT_MAX_DEGREE).unwrap();
        let g = build_hanan_grid(&n);
        assert_eq!(s.optimal_wirelength, 20);
        assert_eq!(s.steiner_set, vec![g.index_of(Point::new(5, 5)).unwrap()]);
    }

    #[test]
    fn degree_guard() {
        let pins: Vec<(i64, i64)> = (0..10).map(|i| (i, (i * 7) % 10)).collect();
        let n = net(&pins);
        assert!(matches!(
            exact_rsmt(&n, DEFAULT_MAX_DEGREE),
            Err(Error::DegreeTooLarge { max_degree: 9, .. })
        ));
        assert!(exact_rsmt(&n, 10).is_ok());
    }
}
