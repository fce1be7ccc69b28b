//! Inference: threshold node probabilities, route with a spanning tree and
//! clean up selected points that ended up with tree degree 2.

use crate::error::{Error, Result};
use crate::gat::{model_forward, Mode, ModelParams};
use crate::net::{build_hanan_grid, disjoint_batch, HananGrid, Net, Point};
use crate::rsmt::{route_points, tree_degrees, RoutedTree};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SteinerPrediction {
    /// One probability per canonical grid node.
    pub probabilities: Vec<f64>,
    /// Candidate nodes with probability above the threshold, ascending.
    pub selected: Vec<usize>,
    pub threshold: f64,
}

impl SteinerPrediction {
    /// Selects candidate (never pin) nodes whose probability exceeds `threshold`.
    pub fn from_probabilities(grid: &HananGrid, probabilities: Vec<f64>, threshold: f64) -> Result<Self> {
        if probabilities.len() != grid.node_count() {
            return Err(Error::Shape(format!(
                "{} probabilities for {} grid nodes",
                probabilities.len(),
                grid.node_count()
            )));
        }
        let selected = (0..grid.node_count())
            .filter(|&i| !grid.is_pin(i) && probabilities[i] > threshold)
            .collect();
        Ok(SteinerPrediction {
            probabilities,
            selected,
            threshold,
        })
    }

    /// A prediction that picks exactly `selected` with probability 1.
    pub fn from_selection(grid: &HananGrid, selected: &[usize]) -> Result<Self> {
        let mut probabilities = vec![0.0; grid.node_count()];
        for &i in selected {
            if i >= grid.node_count() || grid.is_pin(i) {
                return Err(Error::InvalidLabels {
                    id: grid.net_id(),
                    msg: format!("selection {i} is not a candidate node"),
                });
            }
            probabilities[i] = 1.0;
        }
        SteinerPrediction::from_probabilities(grid, probabilities, DEFAULT_THRESHOLD)
    }
}

pub fn predict_steiner(params: &ModelParams, net: &Net, threshold: f64) -> Result<SteinerPrediction> {
    Ok(predict_batch(params, std::slice::from_ref(net), threshold)?.remove(0))
}

/// Predicts several nets with a single forward pass over their disjoint union.
pub fn predict_batch(
    params: &ModelParams,
    nets: &[Net],
    threshold: f64,
) -> Result<Vec<SteinerPrediction>> {
    let batch = disjoint_batch(nets.iter().map(build_hanan_grid).collect())?;
    let (probs, _) = model_forward(params, batch.input(), Mode::Infer)?;
    batch
        .grids()
        .iter()
        .enumerate()
        .map(|(k, grid)| {
            SteinerPrediction::from_probabilities(grid, probs[batch.member_range(k)].to_vec(), threshold)
        })
        .collect()
}

fn route_selection(net: &Net, grid: &HananGrid, selected: &[usize]) -> RoutedTree {
    let steiner: Vec<Point> = selected.iter().map(|&i| grid.point(i)).collect();
    route_points(net.pins(), &steiner)
}

/// Spanning tree over the pins and the selected candidates.
pub fn route_prediction(net: &Net, pred: &SteinerPrediction) -> RoutedTree {
    route_selection(net, &build_hanan_grid(net), &pred.selected)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub tree: RoutedTree,
    /// Selection that produced `tree`.
    pub selected: Vec<usize>,
    /// Whether the refinement pass ran at all.
    pub refined: bool,
    /// Spanning trees rebuilt during refinement.
    pub reroutes: usize,
}

/// Positions in `selected` whose tree point has degree 2.
fn degree_two(tree: &RoutedTree, pin_count: usize, selected: &[usize]) -> Vec<usize> {
    let degree = tree_degrees(tree);
    (0..selected.len())
        .filter(|&k| degree[pin_count + k] == 2)
        .collect()
}

/// Position of the lowest-probability entry among `positions`, ties to the
/// lower node index.
fn weakest(pred: &SteinerPrediction, selected: &[usize], positions: impl Iterator<Item = usize>) -> Option<usize> {
    positions.min_by(|&a, &b| {
        let (ia, ib) = (selected[a], selected[b]);
        pred.probabilities[ia]
            .total_cmp(&pred.probabilities[ib])
            .then(ia.cmp(&ib))
    })
}

/// Removes selected points that are not real Steiner points.
///
/// Runs only when some selected point has tree degree 2:
///
/// 1. Drop the lowest-probability selected point and reroute, until no
///    selected point has degree 2 (or none is left).
/// 2. Keep that result if it is shorter than `tree`; otherwise go back to
///    the original selection.
/// 3. Drop the lowest-probability degree-2 point and reroute, until none is
///    left.
///
/// The returned wirelength never exceeds that of `tree`.
pub fn refine(net: &Net, pred: &SteinerPrediction, tree: &RoutedTree) -> Refinement {
    let grid = build_hanan_grid(net);
    let pins = net.pins().len();
    let initial = pred.selected.clone();

    if degree_two(tree, pins, &initial).is_empty() {
        return Refinement {
            tree: tree.clone(),
            selected: initial,
            refined: false,
            reroutes: 0,
        };
    }

    let mut reroutes = 0;
    let mut selected = initial.clone();
    let mut current = tree.clone();
    while !selected.is_empty() && !degree_two(&current, pins, &selected).is_empty() {
        let k = weakest(pred, &selected, 0..selected.len()).unwrap();
        selected.remove(k);
        current = route_selection(net, &grid, &selected);
        reroutes += 1;
    }
    if current.total_wirelength < tree.total_wirelength {
        return Refinement {
            tree: current,
            selected,
            refined: true,
            reroutes,
        };
    }

    let mut selected = initial;
    let mut current = tree.clone();
    loop {
        let twos = degree_two(&current, pins, &selected);
        let Some(k) = weakest(pred, &selected, twos.into_iter()) else {
            break;
        };
        selected.remove(k);
        current = route_selection(net, &grid, &selected);
        reroutes += 1;
    }
    Refinement {
        tree: current,
        selected,
        refined: true,
        reroutes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gat::init_params;
    use crate::rsmt::{exact_rsmt, DEFAULT_MAX_DEGREE};

    fn net(pins: &[(i64, i64)]) -> Net {
        Net::new(0, pins.iter().map(|&p| Point::from(p))).unwrap()
    }

    fn with_probs(n: &Net, probs: &[(Point, f64)]) -> SteinerPrediction {
        let grid = build_hanan_grid(n);
        let mut p = vec![0.0; grid.node_count()];
        for &(pt, v) in probs {
            p[grid.index_of(pt).unwrap()] = v;
        }
        SteinerPrediction::from_probabilities(&grid, p, DEFAULT_THRESHOLD).unwrap()
    }

    #[test]
    fn threshold_one_selects_nothing() {
        let n = net(&[(0, 0), (5, 3), (2, 8), (9, 9)]);
        let pred = predict_steiner(&init_params(1), &n, 1.0).unwrap();
        assert!(pred.selected.is_empty());
        assert_eq!(
            route_prediction(&n, &pred).total_wirelength,
            crate::rsmt::mst_wirelength(n.pins())
        );
    }

    #[test]
    fn pins_never_selected() {
        let n = net(&[(0, 0), (5, 3), (2, 8)]);
        let grid = build_hanan_grid(&n);
        let pred = SteinerPrediction::from_probabilities(&grid, vec![0.99; 9], 0.5).unwrap();
        assert_eq!(pred.selected, grid.candidate_indices());
    }

    #[test]
    fn oracle_selection_routes_optimally() {
        let n = net(&[(0, 0), (6, 2), (3, 7), (9, 5), (1, 9)]);
        let sol = exact_rsmt(&n, DEFAULT_MAX_DEGREE).unwrap();
        let grid = build_hanan_grid(&n);
        let pred = SteinerPrediction::from_selection(&grid, &sol.steiner_set).unwrap();
        assert_eq!(route_prediction(&n, &pred).total_wirelength, sol.optimal_wirelength);
    }

    #[test]
    fn no_degree_two_means_no_change() {
        let n = net(&[(0, 0), (2, 0), (1, 2)]);
        let pred = with_probs(&n, &[(Point::new(1, 0), 0.9)]);
        let tree = route_prediction(&n, &pred);
        let out = refine(&n, &pred, &tree);
        assert!(!out.refined);
        assert_eq!(out.tree, tree);
    }

    #[test]
    fn useless_bend_is_dropped() {
        // (5,4) only turns the corner between (5,1) and (8,4).
        let n = net(&[(5, 1), (8, 4), (7, 1)]);
        let pred = with_probs(&n, &[(Point::new(5, 4), 0.9)]);
        let tree = route_prediction(&n, &pred);
        assert_eq!(tree.total_wirelength, 8);
        let out = refine(&n, &pred, &tree);
        assert!(out.refined);
        assert!(out.selected.is_empty());
        assert_eq!(out.tree.total_wirelength, 6);
        assert_eq!(out.tree.total_wirelength, exact_rsmt(&n, DEFAULT_MAX_DEGREE).unwrap().optimal_wirelength);
    }

    #[test]
    fn falls_back_to_dropping_only_degree_two_points() {
        // Dropping by probability alone removes (5,8) and then (1,2) without
        // gaining anything, so only the degree-2 point (5,8) goes.
        let n = net(&[(5, 0), (5, 2), (4, 8), (1, 9)]);
        let pred = with_probs(&n, &[(Point::new(1, 2), 0.7), (Point::new(5, 8), 0.6)]);
        let tree = route_prediction(&n, &pred);
        let out = refine(&n, &pred, &tree);
        assert!(out.refined);
        let grid = build_hanan_grid(&n);
        assert_eq!(out.selected, vec![grid.index_of(Point::new(1, 2)).unwrap()]);
        assert_eq!(out.tree.total_wirelength, tree.total_wirelength);
        assert!(degree_two(&out.tree, n.degree(), &out.selected).is_empty());
    }
}
