//! Kantorovich problem for distance cost: optimal plan, 1-Lipschitz
//! potential, the set of saturated pairs and monotonicity certificates.

mod gamma;
mod monotone;
mod simplex;

use crate::error::{Error, Result};
use crate::mmspace::{MetricMeasureSpace, ProbabilityMeasure};

pub use gamma::{build_gamma, default_eps_gamma, geodesic_closure, GammaSet};
pub use monotone::{
    check_d2_monotone_order, check_d_monotone, CycleViolation, D2_TOL, D_MONOTONE_TOL,
};

/// Total masses may differ by at most this before the problem is infeasible.
pub const BALANCE_TOL: f64 = 1e-12;

/// Allowed gap between primal and dual objective.
pub const DUALITY_TOL: f64 = 1e-7;

/// Allowed violation of the potential constraints after recovery.
const POTENTIAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `(x, y, mass)` with positive mass, sorted by `(x, y)`.
    pub entries: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn from_entries(space: &MetricMeasureSpace, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.retain(|e| e.2 > 0.0);
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let cost = entries.iter().map(|&(x, y, m)| m * space.dist(x, y)).sum();
        Self { entries, cost }
    }

    pub fn first_marginal(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(x, _, m) in &self.entries {
            out[x] += m;
        }
        out
    }

    pub fn second_marginal(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(_, y, m) in &self.entries {
            out[y] += m;
        }
        out
    }

    /// Support pairs.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|&(x, y, _)| (x, y)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KantorovichSolution {
    pub plan: TransportPlan,
    pub potential: Vec<f64>,
    pub value: f64,
}

impl KantorovichSolution {
    /// `∫ φ dμ₀ − ∫ φ dμ₁`.
    pub fn dual_value(&self, mu0: &ProbabilityMeasure, mu1: &ProbabilityMeasure) -> f64 {
        self.potential
            .iter()
            .zip(mu0.mass().iter().zip(mu1.mass()))
            .map(|(p, (a, b))| p * (a - b))
            .sum()
    }
}

/// Optimal transport for cost `dist` between `mu0` and `mu1`.
///
/// The plan comes from a network simplex on the bipartite support graph.
/// The potential is the midpoint of the largest and smallest 1-Lipschitz
/// functions saturated on the plan support (pinned at one support point per
/// connected component), then normalised to minimum zero per component.
/// Taking the midpoint keeps the saturated set as small as the optimal plan
/// allows.
pub fn solve_w1(
    space: &MetricMeasureSpace,
    mu0: &ProbabilityMeasure,
    mu1: &ProbabilityMeasure,
) -> Result<KantorovichSolution> {
    mu0.check_on(space)?;
    mu1.check_on(space)?;
    let (t0, t1) = (mu0.total(), mu1.total());
    if (t0 - t1).abs() > BALANCE_TOL {
        return Err(Error::Infeasible {
            mass0: t0,
            mass1: t1,
        });
    }
    let n = space.len();
    if mu0.mass() == mu1.mass() {
        let entries = (0..n)
            .filter(|&x| mu0.mass()[x] > 0.0)
            .map(|x| (x, x, mu0.mass()[x]))
            .collect();
        return Ok(KantorovichSolution {
            plan: TransportPlan::from_entries(space, entries),
            potential: vec![0.0; n],
            value: 0.0,
        });
    }

    let src = mu0.support();
    let dst = mu1.support();
    let supply: Vec<f64> = src.iter().map(|&x| mu0.mass()[x]).collect();
    let demand: Vec<f64> = dst.iter().map(|&y| mu1.mass()[y]).collect();
    let cost = |i: usize, j: usize| space.dist(src[i], dst[j]);
    let flows = simplex::transport_simplex(&supply, &demand, &cost)?;
    let plan = TransportPlan::from_entries(
        space,
        flows
            .into_iter()
            .map(|(i, j, f)| (src[i], dst[j], f))
            .collect(),
    );

    let potential = recover_potential(space, &plan, &src)?;
    let sol = KantorovichSolution {
        value: plan.cost,
        plan,
        potential,
    };
    verify_solution(space, &sol, mu0, mu1)?;
    Ok(sol)
}

fn recover_potential(
    space: &MetricMeasureSpace,
    plan: &TransportPlan,
    src: &[usize],
) -> Result<Vec<f64>> {
    let n = space.len();
    let comp = space.components();
    let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut phi = vec![0.0; n];
    for c in 0..ncomp {
        let members: Vec<usize> = (0..n).filter(|&x| comp[x] == c).collect();
        let root = src
            .iter()
            .copied()
            .filter(|&x| comp[x] == c)
            .min_by_key(|&x| space.rank(x))
            .unwrap_or_else(|| *members.iter().min_by_key(|&&x| space.rank(x)).unwrap());
        let fwd: Vec<(usize, usize, f64)> = plan
            .entries
            .iter()
            .filter(|e| comp[e.0] == c && e.0 != e.1)
            .map(|&(x, y, _)| (x, y, -space.dist(x, y)))
            .collect();
        let rev: Vec<(usize, usize, f64)> = fwd.iter().map(|&(x, y, w)| (y, x, w)).collect();
        let upper = constrained_distances(space, &members, root, &fwd)?;
        let lower = constrained_distances(space, &members, root, &rev)?;
        for &x in &members {
            phi[x] = 0.5 * (upper[x] - lower[x]);
        }
    }
    tighten_potential(space, &mut phi);
    for c in 0..ncomp {
        let lo = (0..n)
            .filter(|&x| comp[x] == c)
            .map(|x| phi[x])
            .fold(f64::INFINITY, f64::min);
        for x in 0..n {
            if comp[x] == c {
                phi[x] -= lo;
            }
        }
    }
    Ok(phi)
}

/// Shortest distances from `root` in the constraint graph made of all
/// metric edges plus the extra weighted `arcs`. Metric edges are handled
/// implicitly: the triangle inequality means one closure pass per improved
/// node suffices, so the outer loop is Bellman-Ford over `arcs` only.
fn constrained_distances(
    space: &MetricMeasureSpace,
    members: &[usize],
    root: usize,
    arcs: &[(usize, usize, f64)],
) -> Result<Vec<f64>> {
    let n = space.len();
    let thr = 1e-13 * (1.0 + space.diameter());
    let mut d = vec![f64::INFINITY; n];
    for &v in members {
        d[v] = space.dist(root, v);
    }
    let mut improved = vec![false; n];
    for _round in 0..=arcs.len() + 1 {
        let mut changed = Vec::new();
        for &(a, b, w) in arcs {
            if d[a] + w < d[b] - thr {
                d[b] = d[a] + w;
                if !improved[b] {
                    improved[b] = true;
                    changed.push(b);
                }
            }
        }
        if changed.is_empty() {
            return Ok(d);
        }
        for &b in &changed {
            improved[b] = false;
            let row = space.dist_row(b);
            for &v in members {
                let cand = d[b] + row[v];
                if cand < d[v] - thr {
                    d[v] = cand;
                }
            }
        }
    }
    Err(Error::NumericFailure(
        "potential recovery did not converge (negative cycle on plan support)".into(),
    ))
}

/// Replace `φ(x)` by `min_y dist(x, y) + φ(y)` until nothing changes.
///
/// Never increases any value; the result is 1-Lipschitz on every connected
/// component, and a 1-Lipschitz input is returned unchanged.
pub fn tighten_potential(space: &MetricMeasureSpace, phi: &mut [f64]) {
    let n = space.len();
    loop {
        let mut changed = false;
        for x in 0..n {
            let row = space.dist_row(x);
            let mut best = phi[x];
            for y in 0..n {
                let cand = row[y] + phi[y];
                if cand < best {
                    best = cand;
                }
            }
            if best < phi[x] {
                phi[x] = best;
                changed = true;
            }
        }
        if !changed {
            return;
        }
    }
}

fn verify_solution(
    space: &MetricMeasureSpace,
    sol: &KantorovichSolution,
    mu0: &ProbabilityMeasure,
    mu1: &ProbabilityMeasure,
) -> Result<()> {
    let phi = &sol.potential;
    for &(x, y, _) in &sol.plan.entries {
        let defect = space.dist(x, y) - (phi[x] - phi[y]);
        if defect > POTENTIAL_TOL {
            return Err(Error::NumericFailure(format!(
                "potential not saturated on plan pair ({x},{y}) by {defect}"
            )));
        }
    }
    let dual = sol.dual_value(mu0, mu1);
    if (sol.value - dual).abs() > DUALITY_TOL {
        return Err(Error::NumericFailure(format!(
            "primal {} and dual {} differ",
            sol.value, dual
        )));
    }
    Ok(())
}

/// Largest ratio `|φ(x) − φ(y)| / dist(x, y)` over finite-distance pairs.
pub fn lipschitz_constant(space: &MetricMeasureSpace, phi: &[f64]) -> f64 {
    let n = space.len();
    let mut worst = 0.0f64;
    for x in 0..n {
        for y in (x + 1)..n {
            let d = space.dist(x, y);
            if d.is_finite() {
                worst = worst.max((phi[x] - phi[y]).abs() / d);
            }
        }
    }
    worst
}
