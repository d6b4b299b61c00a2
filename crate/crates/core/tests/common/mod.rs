//! Independent oracles and instance generators shared by integration tests.

#![allow(dead_code)]

use monge_rays::mmspace::{MetricMeasureSpace, ProbabilityMeasure};
use monge_rays::rays::{GammaStructure, RayDecomposition};
use rand::seq::index::sample;
use rand::Rng;

/// Minimum of a transportation problem by enumerating every basic solution:
/// all column subsets of size `p + q − 1` of the constraint matrix.
pub fn lp_vertex_enumeration(
    supply: &[f64],
    demand: &[f64],
    cost: impl Fn(usize, usize) -> f64,
) -> f64 {
    let (p, q) = (supply.len(), demand.len());
    let cells: Vec<(usize, usize)> = (0..p).flat_map(|i| (0..q).map(move |j| (i, j))).collect();
    let r = p + q - 1;
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..r).collect();
    loop {
        if let Some(x) = solve_basis(supply, demand, &cells, &pick) {
            if x.iter().all(|&v| v >= -1e-12) {
                let c: f64 = pick
                    .iter()
                    .zip(&x)
                    .map(|(&k, &v)| v * cost(cells[k].0, cells[k].1))
                    .sum();
                best = best.min(c);
            }
        }
        // Next combination in lexicographic order.
        let k = cells.len();
        let mut i = r;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] != i + k - r {
                break;
            }
        }
        pick[i] += 1;
        for j in i + 1..r {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

fn solve_basis(
    supply: &[f64],
    demand: &[f64],
    cells: &[(usize, usize)],
    pick: &[usize],
) -> Option<Vec<f64>> {
    let (p, q) = (supply.len(), demand.len());
    let rows = p + q;
    let cols = pick.len();
    let mut a = vec![vec![0.0; cols + 1]; rows];
    for (c, &k) in pick.iter().enumerate() {
        let (i, j) = cells[k];
        a[i][c] = 1.0;
        a[p + j][c] = 1.0;
    }
    for i in 0..p {
        a[i][cols] = supply[i];
    }
    for j in 0..q {
        a[p + j][cols] = demand[j];
    }
    let mut row = 0;
    let mut pivots = Vec::with_capacity(cols);
    for c in 0..cols {
        let piv = (row..rows).max_by(|&u, &v| a[u][c].abs().total_cmp(&a[v][c].abs()))?;
        if a[piv][c].abs() < 1e-12 {
            return None;
        }
        a.swap(row, piv);
        let d = a[row][c];
        for v in a[row].iter_mut() {
            *v /= d;
        }
        for other in 0..rows {
            if other != row && a[other][c] != 0.0 {
                let f = a[other][c];
                for k in 0..=cols {
                    a[other][k] -= f * a[row][k];
                }
            }
        }
        pivots.push(row);
        row += 1;
    }
    if (row..rows).any(|i| a[i][cols].abs() > 1e-9) {
        return None;
    }
    Some(pivots.iter().map(|&i| a[i][cols]).collect())
}

/// W1 between two measures on a space by vertex enumeration over their supports.
pub fn w1_oracle(
    space: &MetricMeasureSpace,
    mu0: &ProbabilityMeasure,
    mu1: &ProbabilityMeasure,
) -> f64 {
    let s0 = mu0.support();
    let s1 = mu1.support();
    let supply: Vec<f64> = s0.iter().map(|&i| mu0.mass()[i]).collect();
    let demand: Vec<f64> = s1.iter().map(|&j| mu1.mass()[j]).collect();
    lp_vertex_enumeration(&supply, &demand, |i, j| space.dist(s0[i], s1[j]))
}

/// Probability measure with integer masses `1..=9` on `k` distinct random points.
pub fn rational_measure(n: usize, k: usize, rng: &mut impl Rng) -> ProbabilityMeasure {
    let mut mass = vec![0.0; n];
    for i in sample(rng, n, k.min(n)).into_iter() {
        mass[i] = rng.gen_range(1..=9) as f64;
    }
    ProbabilityMeasure::normalized(mass).unwrap()
}

/// Worst violation of the chain conditions over all rays: potential strictly
/// decreasing along the ray, and potential drop, coordinate step and
/// distance agreeing between consecutive nodes. `None` when every ray passes.
pub fn chain_failure(
    space: &MetricMeasureSpace,
    structure: &GammaStructure,
    dec: &RayDecomposition,
) -> Option<String> {
    let phi = structure.potential();
    let tol = structure.gamma.tol + space.geo_tol();
    for (r, ray) in dec.rays.iter().enumerate() {
        for k in 1..ray.nodes.len() {
            let (x, y) = (ray.nodes[k - 1], ray.nodes[k]);
            let dphi = phi[x] - phi[y];
            let dt = ray.t[k] - ray.t[k - 1];
            let d = space.dist(x, y);
            if dphi <= tol || (dphi - dt).abs() > tol || (d - dt).abs() > tol {
                return Some(format!("ray {r} at {x}->{y}: dphi {dphi}, dt {dt}, d {d}"));
            }
        }
    }
    let mut seen = vec![false; space.len()];
    for class in &dec.classes {
        for &x in class {
            if std::mem::replace(&mut seen[x], true) {
                return Some(format!("point {x} in two classes"));
            }
        }
    }
    None
}
