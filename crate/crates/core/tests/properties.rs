use proptest::prelude::*;

use steiner_core::net::{build_hanan_grid, grid_features, Net, Point};
use steiner_core::predict::{refine, route_prediction, SteinerPrediction};
use steiner_core::rsmt::{exact_rsmt, kruskal_mst, mst_wirelength, route_points, tree_degrees, TreePoint};

fn pins(max_len: usize, span: i64) -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((0..=span, 0..=span), 2..=max_len)
}

fn net_of(raw: &[(i64, i64)]) -> Option<Net> {
    Net::new(0, raw.iter().map(|&p| Point::from(p))).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn grid_shape(raw in pins(9, 50)) {
        let Some(net) = net_of(&raw) else { return Ok(()) };
        let g = build_hanan_grid(&net);
        let (nx, ny) = (g.xs().len(), g.ys().len());
        prop_assert_eq!(g.node_count(), nx * ny);
        prop_assert_eq!(g.edges().len(), nx * (ny - 1) + ny * (nx - 1));
        prop_assert_eq!(g.pin_indices().len(), net.degree());
        for p in net.pins() {
            prop_assert!(g.is_pin(g.index_of(*p).unwrap()));
        }
        // Canonical order: x first, then y.
        for w in g.nodes().windows(2) {
            prop_assert!((w[0].0.x, w[0].0.y) < (w[1].0.x, w[1].0.y));
        }
    }

    #[test]
    fn grid_ignores_pin_order(raw in pins(8, 40), rot in 0usize..8) {
        let Some(net) = net_of(&raw) else { return Ok(()) };
        let mut shuffled = net.pins().to_vec();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let other = Net::new(0, shuffled).unwrap();
        let (a, b) = (build_hanan_grid(&net), build_hanan_grid(&other));
        prop_assert_eq!(a.nodes(), b.nodes());
        prop_assert_eq!(a.edges(), b.edges());
        prop_assert_eq!(grid_features(&a), grid_features(&b));
    }

    #[test]
    fn features_in_range(raw in pins(9, 1_000_000)) {
        let Some(net) = net_of(&raw) else { return Ok(()) };
        let f = grid_features(&build_hanan_grid(&net));
        let mut top: f64 = 0.0;
        for r in f.rows() {
            prop_assert!((0.0..=100.0).contains(&r[0]) && (0.0..=100.0).contains(&r[1]));
            prop_assert!(r[2] == 0.0 || r[2] == 1.0);
            top = top.max(r[0]).max(r[1]);
        }
        prop_assert_eq!(top, 100.0);
    }

    #[test]
    fn spanning_tree_shape(raw in pins(30, 1000)) {
        let pts: Vec<TreePoint> = raw.iter().map(|&p| TreePoint::pin(Point::from(p))).collect();
        let tree = kruskal_mst(&pts).unwrap();
        prop_assert_eq!(tree.edges.len(), pts.len() - 1);
        prop_assert_eq!(tree.edges.iter().map(|e| e.length).sum::<i64>(), tree.total_wirelength);
        let degrees = tree_degrees(&tree);
        prop_assert_eq!(degrees.iter().sum::<usize>(), 2 * (pts.len() - 1));
    }

    #[test]
    fn oracle_is_consistent(raw in pins(6, 30)) {
        let Some(net) = net_of(&raw) else { return Ok(()) };
        let sol = exact_rsmt(&net, 9).unwrap();
        prop_assert!(sol.optimal_wirelength <= mst_wirelength(net.pins()));
        let g = build_hanan_grid(&net);
        let steiner: Vec<Point> = sol.steiner_set.iter().map(|&i| g.point(i)).collect();
        prop_assert_eq!(route_points(net.pins(), &steiner).total_wirelength, sol.optimal_wirelength);
        prop_assert!(sol.steiner_set.iter().all(|&i| !g.is_pin(i)));
        prop_assert!(sol.steiner_set.len() <= net.degree().saturating_sub(2));
    }

    #[test]
    fn refinement_never_lengthens(raw in pins(7, 40), probs in prop::collection::vec(0.0f64..1.0, 49)) {
        let Some(net) = net_of(&raw) else { return Ok(()) };
        let g = build_hanan_grid(&net);
        let p: Vec<f64> = (0..g.node_count()).map(|i| probs[i % probs.len()]).collect();
        let pred = SteinerPrediction::from_probabilities(&g, p, 0.5).unwrap();
        let tree = route_prediction(&net, &pred);
        let out = refine(&net, &pred, &tree);
        prop_assert!(out.tree.total_wirelength <= tree.total_wirelength);
        prop_assert!(out.selected.iter().all(|s| pred.selected.contains(s)));
        let degrees = tree_degrees(&out.tree);
        for k in 0..out.selected.len() {
            prop_assert_ne!(degrees[net.degree() + k], 2);
        }
    }
}
