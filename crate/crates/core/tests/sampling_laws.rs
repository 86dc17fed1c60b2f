//! Distributional checks of walks and Wilson's algorithm on small graphs,
//! against laws computed independently (linear solves, enumeration).

use cylinder_ust::graph::{CylinderGraph, EdgeId, Graph};
use cylinder_ust::oracle::{
    chi_square_counts, chi_square_homogeneity, enumerate_spanning_trees, tally, Multigraph,
};
use cylinder_ust::sampler::{
    default_order, walk_until_hit, wilson, wilson_extend, RngStream, SampleOrder, DEFAULT_STEP_CAP,
};

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (x, &y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= f * y;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

#[test]
fn hitting_time_on_triangle() {
    let g = CylinderGraph::build(3, 1, false).unwrap();
    // E_a = 1 + E_c / 2, E_c = 1 + E_a / 2
    let expected = solve(vec![vec![1.0, -0.5], vec![-0.5, 1.0]], vec![1.0, 1.0])[0];
    assert!((expected - 2.0).abs() < 1e-12);
    let mut rng = RngStream::new(1, 0);
    let runs = 100_000;
    let total: usize = (0..runs)
        .map(|_| {
            let walk = walk_until_hit(&g, 0, |v| v == 1, &mut rng, DEFAULT_STEP_CAP).unwrap();
            assert_eq!(walk.vertices.last(), Some(&1));
            walk.len()
        })
        .sum();
    let mean = total as f64 / runs as f64;
    assert!((mean - 2.0).abs() < 0.05, "mean hitting time {mean}");
}

#[test]
fn harmonic_measure_of_end_ring() {
    let g = CylinderGraph::build(3, 2, false).unwrap();
    let free: Vec<usize> = g.ring_vertices(1).collect();
    let targets: Vec<usize> = g.ring_vertices(0).collect();
    // h_t(v) = Σ_w P(v, w) h_t(w) with h_t = 1{t} on the target ring
    let start = g.index(cylinder_ust::graph::Vertex::cell(0, 1)).unwrap();
    let measure: Vec<f64> = targets
        .iter()
        .map(|&t| {
            let mut a = vec![vec![0.0; free.len()]; free.len()];
            let mut b = vec![0.0; free.len()];
            for (r, &v) in free.iter().enumerate() {
                a[r][r] = 1.0;
                let p = 1.0 / g.degree(v) as f64;
                for inc in g.incident(v) {
                    let w = inc.to as usize;
                    match free.iter().position(|&f| f == w) {
                        Some(c) => a[r][c] -= p,
                        None if w == t => b[r] += p,
                        None => {}
                    }
                }
            }
            solve(a, b)[free.iter().position(|&f| f == start).unwrap()]
        })
        .collect();
    assert!((measure.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((measure[0] - 0.5).abs() < 1e-12);

    let mut rng = RngStream::new(2, 0);
    let runs = 100_000u64;
    let mut hits = vec![0u64; targets.len()];
    for _ in 0..runs {
        let walk = walk_until_hit(&g, start, |v| v < 3, &mut rng, DEFAULT_STEP_CAP).unwrap();
        hits[*walk.vertices.last().unwrap()] += 1;
    }
    let expected: Vec<f64> = measure.iter().map(|p| p * runs as f64).collect();
    let test = chi_square_counts(&hits, &expected).unwrap();
    assert!(test.p_value > 1e-3, "{hits:?} vs {expected:?}: {test:?}");
}

#[test]
fn triangle_trees_are_equally_likely() {
    let g = CylinderGraph::build(3, 1, false).unwrap();
    let mut rng = RngStream::new(3, 0);
    let samples = 30_000;
    let mut missing = [0u32; 3];
    for _ in 0..samples {
        let t = wilson(&g, 0, &default_order(3, 0), &mut rng).unwrap();
        let omitted = (0..3).find(|&e| !t.contains_edge(e)).unwrap();
        missing[omitted as usize] += 1;
    }
    let sigma = (samples as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
    for count in missing {
        assert!(
            (count as f64 - samples as f64 / 3.0).abs() < 3.0 * sigma,
            "{missing:?}"
        );
    }
}

#[test]
fn wilson_is_uniform_on_small_cylinder() {
    let g = CylinderGraph::build(3, 2, false).unwrap();
    let universe = enumerate_spanning_trees(&Multigraph::from_graph(&g), 1_000).unwrap();
    assert_eq!(universe.len(), 75);
    let (root, order) = SampleOrder::TrunkFirst.resolve(&g);
    let mut rng = RngStream::new(4, 0);
    let trees: Vec<Vec<EdgeId>> = (0..100_000)
        .map(|_| {
            let t = wilson(&g, root, &order, &mut rng).unwrap();
            t.validate(&g).unwrap();
            t.edges().to_vec()
        })
        .collect();
    let counts = tally(&trees, &universe).unwrap();
    let expected = vec![trees.len() as f64 / 75.0; 75];
    let test = chi_square_counts(&counts, &expected).unwrap();
    assert!(test.p_value > 1e-3, "{test:?}");
}

#[test]
fn sink_cylinder_is_uniform() {
    let g = CylinderGraph::build(3, 1, true).unwrap();
    let universe = enumerate_spanning_trees(&Multigraph::from_graph(&g), 1_000).unwrap();
    assert_eq!(universe.len(), 50);
    let (root, order) = SampleOrder::Default.resolve(&g);
    let mut rng = RngStream::new(5, 0);
    let trees: Vec<Vec<EdgeId>> = (0..50_000)
        .map(|_| wilson(&g, root, &order, &mut rng).unwrap().edges().to_vec())
        .collect();
    let counts = tally(&trees, &universe).unwrap();
    let test = chi_square_counts(&counts, &[1000.0; 50]).unwrap();
    assert!(test.p_value > 1e-3, "{test:?}");
}

#[test]
fn extend_matches_sampling_the_quotient() {
    let g = CylinderGraph::build(3, 2, false).unwrap();
    let forest: Vec<EdgeId> = vec![0, 7];
    let universe: Vec<Vec<EdgeId>> = enumerate_spanning_trees(&Multigraph::from_graph(&g), 1_000)
        .unwrap()
        .into_iter()
        .filter(|t| forest.iter().all(|e| t.contains(e)))
        .collect();
    let samples = 60_000;

    let mut rng = RngStream::new(6, 0);
    let order = default_order(6, 5);
    let extended: Vec<Vec<EdgeId>> = (0..samples)
        .map(|_| {
            wilson_extend(&g, 5, &forest, &order, &mut rng)
                .unwrap()
                .edges()
                .to_vec()
        })
        .collect();

    let quotient = g.contract(&forest).unwrap();
    let root = quotient.class_of(5);
    let class_order = default_order(quotient.class_count(), root);
    let mut rng = RngStream::new(6, 1);
    let lifted: Vec<Vec<EdgeId>> = (0..samples)
        .map(|_| {
            let t = wilson(&quotient, root, &class_order, &mut rng).unwrap();
            let mut edges: Vec<EdgeId> = t.edges().iter().chain(&forest).copied().collect();
            edges.sort_unstable();
            edges
        })
        .collect();

    let a = tally(&extended, &universe).unwrap();
    let b = tally(&lifted, &universe).unwrap();
    let test = chi_square_homogeneity(&a, &b).unwrap();
    assert!(test.p_value > 1e-3, "{test:?}");
    let uniform = chi_square_counts(
        &a,
        &vec![samples as f64 / universe.len() as f64; universe.len()],
    )
    .unwrap();
    assert!(uniform.p_value > 1e-3, "{uniform:?}");
}
