//! Nets, Hanan grids, node features and disjoint batching.
//!
//! Every grid node is addressed by its canonical index: nodes are ordered by
//! ascending x, then ascending y, so the node at column `cx` and row `cy`
//! has index `cx * ys.len() + cy`. Labels, predictions and checkpoints all
//! rely on this ordering.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound for generated pin coordinates.
pub const DEFAULT_COORD_MAX: i64 = 1_000_000;

/// Upper end of the normalized feature range.
pub const FEATURE_SCALE: f64 = 100.0;

/// Width of a node feature row: normalized x, normalized y, pin flag.
pub const FEATURE_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub const fn new(x: i64, y: i64) -> Self {
        Point { x, y }
    }
}

impl From<(i64, i64)> for Point {
    fn from((x, y): (i64, i64)) -> Self {
        Point { x, y }
    }
}

/// A set of pins to be connected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Net {
    id: u64,
    pins: Vec<Point>,
}

impl Net {
    /// Builds a net, dropping repeated pins (first occurrence wins).
    pub fn new(id: u64, pins: impl IntoIterator<Item = Point>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut unique = Vec::new();
        for p in pins {
            if p.x < 0 || p.y < 0 {
                return Err(Error::NegativeCoordinate { id, x: p.x, y: p.y });
            }
            if seen.insert(p) {
                unique.push(p);
            }
        }
        if unique.len() < 2 {
            return Err(Error::DegenerateNet {
                id,
                distinct: unique.len(),
            });
        }
        Ok(Net { id, pins: unique })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn pins(&self) -> &[Point] {
        &self.pins
    }

    pub fn degree(&self) -> usize {
        self.pins.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Pin,
    Candidate,
}

/// The Hanan grid induced by a net's pins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HananGrid {
    net_id: u64,
    xs: Vec<i64>,
    ys: Vec<i64>,
    nodes: Vec<(Point, NodeKind)>,
    edges: Vec<(usize, usize)>,
}

impl HananGrid {
    pub fn net_id(&self) -> u64 {
        self.net_id
    }

    pub fn xs(&self) -> &[i64] {
        &self.xs
    }

    pub fn ys(&self) -> &[i64] {
        &self.ys
    }

    pub fn nodes(&self) -> &[(Point, NodeKind)] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn point(&self, index: usize) -> Point {
        self.nodes[index].0
    }

    pub fn kind(&self, index: usize) -> NodeKind {
        self.nodes[index].1
    }

    pub fn is_pin(&self, index: usize) -> bool {
        self.nodes[index].1 == NodeKind::Pin
    }

    /// Undirected grid edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Canonical index of the node at `p`, if `p` lies on the grid.
    pub fn index_of(&self, p: Point) -> Option<usize> {
        let cx = self.xs.binary_search(&p.x).ok()?;
        let cy = self.ys.binary_search(&p.y).ok()?;
        Some(cx * self.ys.len() + cy)
    }

    pub fn pin_indices(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.is_pin(i)).collect()
    }

    pub fn candidate_indices(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.is_pin(i)).collect()
    }
}

pub fn build_hanan_grid(net: &Net) -> HananGrid {
    let mut xs: Vec<i64> = net.pins.iter().map(|p| p.x).collect();
    let mut ys: Vec<i64> = net.pins.iter().map(|p| p.y).collect();
    xs.sort_unstable();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();

    let pins: HashSet<Point> = net.pins.iter().copied().collect();
    let (nx, ny) = (xs.len(), ys.len());
    let mut nodes = Vec::with_capacity(nx * ny);
    for &x in &xs {
        for &y in &ys {
            let p = Point::new(x, y);
            let kind = if pins.contains(&p) {
                NodeKind::Pin
            } else {
                NodeKind::Candidate
            };
            nodes.push((p, kind));
        }
    }

    let mut edges = Vec::with_capacity(ny * nx.saturating_sub(1) + nx * ny.saturating_sub(1));
    for cx in 0..nx {
        for cy in 0..ny {
            let i = cx * ny + cy;
            if cy + 1 < ny {
                edges.push((i, i + 1));
            }
            if cx + 1 < nx {
                edges.push((i, i + ny));
            }
        }
    }

    HananGrid {
        net_id: net.id,
        xs,
        ys,
        nodes,
        edges,
    }
}

/// Dense row-major node features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<[f64; FEATURE_DIM]>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: Vec<[f64; FEATURE_DIM]>) -> Self {
        FeatureMatrix { rows }
    }

    pub fn rows(&self) -> &[[f64; FEATURE_DIM]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Flat row-major copy, `len() * FEATURE_DIM` values.
    pub fn to_flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }
}

/// Features for a grid. Both axes share one scale factor,
/// `100 / max(width, height)`, after translating the minimum pin coordinate
/// of each axis to zero.
pub fn grid_features(grid: &HananGrid) -> FeatureMatrix {
    let (x0, x1) = (grid.xs[0], *grid.xs.last().unwrap());
    let (y0, y1) = (grid.ys[0], *grid.ys.last().unwrap());
    let extent = (x1 - x0).max(y1 - y0);
    // A net has at least two distinct pins, so at least one axis has extent.
    debug_assert!(extent > 0);
    let extent = extent as f64;
    let rows = grid
        .nodes
        .iter()
        .map(|&(p, kind)| {
            let is_pin = if kind == NodeKind::Pin { 1.0 } else { 0.0 };
            [
                (p.x - x0) as f64 * FEATURE_SCALE / extent,
                (p.y - y0) as f64 * FEATURE_SCALE / extent,
                is_pin,
            ]
        })
        .collect();
    FeatureMatrix { rows }
}

pub fn normalize_features(net: &Net) -> FeatureMatrix {
    grid_features(&build_hanan_grid(net))
}

/// Neighborhoods in compressed-row form. Row `i` holds `N(i) ∪ {i}` in
/// ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Adjacency {
    /// Builds neighborhoods with self-loops from an undirected edge list.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut lists: Vec<Vec<usize>> = (0..node_count).map(|i| vec![i]).collect();
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::Shape(format!(
                    "edge ({a}, {b}) out of range for {node_count} nodes"
                )));
            }
            if a != b {
                lists[a].push(b);
                lists[b].push(a);
            }
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut list in lists {
            list.sort_unstable();
            list.dedup();
            targets.extend(list);
            offsets.push(targets.len());
        }
        Ok(Adjacency { offsets, targets })
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of directed entries, self-loops included.
    pub fn entry_count(&self) -> usize {
        self.targets.len()
    }

    /// Entry range of row `i`; entry `k` in that range points at `targets()[k]`.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.row_range(i)]
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }
}

/// Graph input to the attention network: features plus neighborhoods.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub features: FeatureMatrix,
    pub adjacency: Adjacency,
}

impl GraphInput {
    pub fn new(features: FeatureMatrix, adjacency: Adjacency) -> Result<Self> {
        if features.len() != adjacency.node_count() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} nodes",
                features.len(),
                adjacency.node_count()
            )));
        }
        Ok(GraphInput {
            features,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.features.len()
    }
}

/// Several grids joined as one block-diagonal graph.
#[derive(Debug, Clone)]
pub struct BatchGraph {
    grids: Vec<HananGrid>,
    offsets: Vec<usize>,
    edges: Vec<(usize, usize)>,
    input: GraphInput,
}

impl BatchGraph {
    pub fn grids(&self) -> &[HananGrid] {
        &self.grids
    }

    /// Starting node index of each member grid.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Combined undirected edges in global indices.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn input(&self) -> &GraphInput {
        &self.input
    }

    pub fn node_count(&self) -> usize {
        self.input.node_count()
    }

    /// Global node range of member `k`.
    pub fn member_range(&self, k: usize) -> std::ops::Range<usize> {
        let start = self.offsets[k];
        start..start + self.grids[k].node_count()
    }
}

pub fn disjoint_batch(grids: Vec<HananGrid>) -> Result<BatchGraph> {
    if grids.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut offsets = Vec::with_capacity(grids.len());
    let mut edges = Vec::new();
    let mut rows = Vec::new();
    let mut total = 0;
    for grid in &grids {
        offsets.push(total);
        edges.extend(grid.edges.iter().map(|&(a, b)| (a + total, b + total)));
        rows.extend_from_slice(grid_features(grid).rows());
        total += grid.node_count();
    }
    let adjacency = Adjacency::from_edges(total, &edges)?;
    let input = GraphInput::new(FeatureMatrix::from_rows(rows), adjacency)?;
    Ok(BatchGraph {
        grids,
        offsets,
        edges,
        input,
    })
}
