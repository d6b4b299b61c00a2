use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mmspace::{shortest_path, MetricMeasureSpace};

use super::KantorovichSolution;

/// Default band for the saturation test: `1e-9 + geo_tol`.
pub fn default_eps_gamma(space: &MetricMeasureSpace) -> f64 {
    1e-9 + space.geo_tol()
}

/// Ordered pairs saturated by a potential: `φ(x) − φ(y) ≥ dist(x, y) − tol`.
///
/// Stored as a dense membership matrix together with the potential that
/// defines it. The diagonal is always present.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSet {
    n: usize,
    member: Vec<bool>,
    pub tol: f64,
    pub potential: Vec<f64>,
}

impl GammaSet {
    pub fn len_points(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.member[x * self.n + y]
    }

    /// Membership in the symmetrised relation.
    #[inline]
    pub fn related(&self, x: usize, y: usize) -> bool {
        self.contains(x, y) || self.contains(y, x)
    }

    /// Points `y` with `(x, y)` in the set, including `x`.
    pub fn forward(&self, x: usize) -> Vec<usize> {
        (0..self.n).filter(|&y| self.contains(x, y)).collect()
    }

    /// Points `x` with `(x, y)` in the set, including `y`.
    pub fn backward(&self, y: usize) -> Vec<usize> {
        (0..self.n).filter(|&x| self.contains(x, y)).collect()
    }

    /// All pairs in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n * self.n)
            .filter(|&k| self.member[k])
            .map(|k| (k / self.n, k % self.n))
            .collect()
    }

    /// Number of pairs, diagonal included.
    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn transpose(&self) -> GammaSet {
        let n = self.n;
        let mut member = vec![false; n * n];
        for x in 0..n {
            for y in 0..n {
                member[y * n + x] = self.member[x * n + y];
            }
        }
        GammaSet {
            n,
            member,
            tol: self.tol,
            potential: self.potential.clone(),
        }
    }
}

pub fn build_gamma(
    space: &MetricMeasureSpace,
    solution: &KantorovichSolution,
    eps_gamma: f64,
) -> GammaSet {
    let n = space.len();
    let phi = &solution.potential;
    let member = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (x, y) = (k / n, k % n);
            let d = space.dist(x, y);
            x == y || (d.is_finite() && phi[x] - phi[y] >= d - eps_gamma)
        })
        .collect();
    GammaSet {
        n,
        member,
        tol: eps_gamma,
        potential: phi.clone(),
    }
}

/// Add every ordered pair of nodes along the chosen shortest path of each
/// pair in the set. Added pairs must still satisfy the saturation test up to
/// `tol + geo_tol`.
pub fn geodesic_closure(space: &MetricMeasureSpace, gamma: &GammaSet) -> Result<GammaSet> {
    let n = space.len();
    let phi = &gamma.potential;
    let slack = gamma.tol + space.geo_tol();
    let added: Vec<Result<Vec<(usize, usize)>>> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut out = Vec::new();
            for y in 0..n {
                if y == x || !gamma.contains(x, y) {
                    continue;
                }
                let path = shortest_path(space, x, y)?;
                let nodes = &path.nodes;
                for i in 0..nodes.len() {
                    for j in (i + 1)..nodes.len() {
                        let (a, b) = (nodes[i], nodes[j]);
                        if gamma.contains(a, b) {
                            continue;
                        }
                        let defect = space.dist(a, b) - (phi[a] - phi[b]);
                        if defect > slack {
                            return Err(Error::ClosureInflation { x: a, y: b, defect });
                        }
                        out.push((a, b));
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut closed = gamma.clone();
    for batch in added {
        for (a, b) in batch? {
            closed.member[a * n + b] = true;
        }
    }
    Ok(closed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kantorovich::{solve_w1, TransportPlan};
    use crate::mmspace::{build_space, generate_model, ModelKind, ModelParams, ProbabilityMeasure};

    fn line(n: usize) -> MetricMeasureSpace {
        let ids = (0..n).map(|i| i.to_string()).collect();
        let d = (0..n)
            .map(|i| (0..n).map(|j| (i as f64 - j as f64).abs()).collect())
            .collect();
        build_space(ids, d, vec![1.0; n], 1e-9).unwrap()
    }

    fn with_potential(space: &MetricMeasureSpace, phi: Vec<f64>) -> KantorovichSolution {
        KantorovichSolution {
            plan: TransportPlan::from_entries(space, vec![]),
            potential: phi,
            value: 0.0,
        }
    }

    #[test]
    fn constant_potential_gives_diagonal() {
        let s = line(5);
        let g = build_gamma(&s, &with_potential(&s, vec![0.0; 5]), 1e-9);
        assert_eq!(g.pairs(), (0..5).map(|i| (i, i)).collect::<Vec<_>>());
        let c = geodesic_closure(&s, &g).unwrap();
        assert_eq!(c, g);
    }

    #[test]
    fn dirac_on_path_contains_all_ordered_pairs() {
        let s = line(6);
        let sol = solve_w1(
            &s,
            &ProbabilityMeasure::dirac(6, 1),
            &ProbabilityMeasure::dirac(6, 4),
        )
        .unwrap();
        let g = geodesic_closure(&s, &build_gamma(&s, &sol, default_eps_gamma(&s))).unwrap();
        for a in 1..=4 {
            for b in a..=4 {
                assert!(g.contains(a, b), "missing ({a},{b})");
            }
        }
        for &(x, y, _) in &sol.plan.entries {
            assert!(g.contains(x, y));
        }
    }

    #[test]
    fn tripod_pairs() {
        let m = generate_model(ModelKind::Tripod, &ModelParams::with_n(2)).unwrap();
        let s = &m.space;
        let ix = |id: &str| s.index_of(id).unwrap();
        let mut phi = vec![0.0; 4];
        phi[ix("u")] = 2.0;
        phi[ix("c")] = 1.0;
        let g = build_gamma(s, &with_potential(s, phi), 1e-9);
        for (a, b) in [("u", "v"), ("u", "w"), ("u", "c"), ("c", "v"), ("c", "w")] {
            assert!(g.contains(ix(a), ix(b)));
        }
        assert!(!g.related(ix("v"), ix("w")));
        // Closure of (u, w) only needs (u, c) and (c, w), which are present.
        let c = geodesic_closure(s, &g).unwrap();
        assert_eq!(c, g);
    }

    #[test]
    fn closure_rejects_inconsistent_band() {
        // A wide band admits (0, 2) while the midpoint pairs are far off.
        let s = line(3);
        let g = build_gamma(&s, &with_potential(&s, vec![1.0, 5.0, 0.0]), 1.5);
        assert!(g.contains(0, 2));
        assert!(matches!(
            geodesic_closure(&s, &g),
            Err(Error::ClosureInflation { .. })
        ));
    }
}
