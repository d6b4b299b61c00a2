//! Library results against independent reference computations.

mod common;

use monge_rays::kantorovich::solve_w1;
use monge_rays::mmspace::{
    build_space_from_graph, generate_model, Edge, ModelKind, ModelParams, ProbabilityMeasure,
};
use monge_rays::monge::{run_monge, MongeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{rational_measure, w1_oracle};

fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b, l) in edges {
        d[a][b] = d[a][b].min(l);
        d[b][a] = d[b][a].min(l);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Connected random graph: a random spanning tree plus extra edges, with
/// lengths that are multiples of 1/4.
fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v, rng.gen_range(1..=8) as f64 * 0.25));
    }
    for _ in 0..n {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            edges.push((a, b, rng.gen_range(1..=8) as f64 * 0.25));
        }
    }
    edges
}

#[test]
fn graph_distances_match_floyd_warshall() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let n = rng.gen_range(3..30);
        let raw = random_graph(n, &mut rng);
        let ids: Vec<String> = (0..n).map(|i| format!("p{i:02}")).collect();
        let edges: Vec<Edge> = raw
            .iter()
            .map(|&(a, b, length)| Edge { a, b, length })
            .collect();
        let s = build_space_from_graph(ids, edges, vec![1.0; n], 1e-9).unwrap();
        let fw = floyd_warshall(n, &raw);
        for x in 0..n {
            for y in 0..n {
                assert_eq!(s.dist(x, y), fw[x][y]);
            }
        }
    }
}

#[test]
fn sphere_distances_match_haversine() {
    let m = generate_model(ModelKind::Sphere2Sample, &ModelParams::with_n(120).seed(3)).unwrap();
    for x in 0..m.space.len() {
        for y in 0..m.space.len() {
            let (t1, l1) = (m.coords[x][0], m.coords[x][1]);
            let (t2, l2) = (m.coords[y][0], m.coords[y][1]);
            let (p1, p2) = (
                std::f64::consts::FRAC_PI_2 - t1,
                std::f64::consts::FRAC_PI_2 - t2,
            );
            let a = ((p2 - p1) / 2.0).sin().powi(2)
                + p1.cos() * p2.cos() * ((l2 - l1) / 2.0).sin().powi(2);
            let hav = 2.0 * a.sqrt().min(1.0).asin();
            assert!((m.space.dist(x, y) - hav).abs() <= 1e-9, "{x} {y}");
        }
    }
    let total: f64 = m.space.weights().iter().sum();
    assert!((total - 4.0 * std::f64::consts::PI).abs() <= 1e-9);
}

#[test]
fn transport_on_random_graphs_matches_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..60 {
        let n = rng.gen_range(4..16);
        let raw = random_graph(n, &mut rng);
        let ids: Vec<String> = (0..n).map(|i| format!("p{i:02}")).collect();
        let edges: Vec<Edge> = raw
            .iter()
            .map(|&(a, b, length)| Edge { a, b, length })
            .collect();
        let s = build_space_from_graph(ids, edges, vec![1.0; n], 1e-9).unwrap();
        let k0 = rng.gen_range(1..=3);
        let k1 = rng.gen_range(1..=3);
        let mu0 = rational_measure(n, k0, &mut rng);
        let mu1 = rational_measure(n, k1, &mut rng);
        let oracle = w1_oracle(&s, &mu0, &mu1);
        let sol = solve_w1(&s, &mu0, &mu1).unwrap();
        assert!((sol.value - oracle).abs() <= 1e-10);
        let run = run_monge(&s, &mu0, &mu1, &MongeConfig::default()).unwrap();
        assert!((run.solution.cost - oracle).abs() <= 1e-10);
    }
}

#[test]
fn line_example_potential_and_tripod_value() {
    let line = generate_model(ModelKind::Interval, &ModelParams::with_n(4).size(3.0))
        .unwrap()
        .space;
    let mu0 = ProbabilityMeasure::dirac(4, 0);
    let mu1 = ProbabilityMeasure::dirac(4, 3);
    assert_eq!(
        solve_w1(&line, &mu0, &mu1).unwrap().potential,
        vec![3.0, 2.0, 1.0, 0.0]
    );
    assert_eq!(w1_oracle(&line, &mu0, &mu1), 3.0);

    let tri = generate_model(ModelKind::Tripod, &ModelParams::with_n(2))
        .unwrap()
        .space;
    let ix = |id: &str| tri.index_of(id).unwrap();
    let mu0 = ProbabilityMeasure::dirac(4, ix("u"));
    let mu1 = ProbabilityMeasure::uniform_on(4, &[ix("v"), ix("w")]).unwrap();
    assert_eq!(w1_oracle(&tri, &mu0, &mu1), 2.0);
    assert_eq!(solve_w1(&tri, &mu0, &mu1).unwrap().value, 2.0);
}
