//! Gluing per-ray solutions into a transport on the whole space.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::disintegration::{
    build_ray_problems, disintegrate_plan, disintegrate_reference, restrict_to_transport_set,
    PlanDisintegration, RayProblem1D, Restriction,
};
use crate::error::{Error, Result};
use crate::kantorovich::{
    build_gamma, default_eps_gamma, geodesic_closure, solve_w1, KantorovichSolution,
};
use crate::mmspace::{MetricMeasureSpace, ProbabilityMeasure};
use crate::oned::{cost_1d, monotone_rearrangement, Atom, Coupling1D};
use crate::rays::{decompose, GammaStructure, RayDecomposition};

/// Marginal tolerance for the glued transport.
pub const PUSHFORWARD_TOL: f64 = 1e-9;

/// Upper bound on virtual sub-atoms per source atom.
pub const MAX_SUBDIVISION: usize = 64;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MongeConfig {
    /// Saturation band; `None` uses `1e-9 + geo_tol`.
    pub eps_gamma: Option<f64>,
    /// Abort with [`Error::GapExceeded`] when `cost − W₁` exceeds this.
    pub max_gap: Option<f64>,
    /// Abort with [`Error::MassOffRays`] when branching mass exceeds this.
    pub branch_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub branch_mass: f64,
    pub reassigned_mass: f64,
    pub reassigned_cost: f64,
    pub unresolved_mass: f64,
    pub unresolved_cost: f64,
    pub split_mass: f64,
    pub diagonal_mass: f64,
    /// Reference weight of the branching points and of the transport set.
    pub branch_weight: f64,
    pub te_weight: f64,
    pub n_rays: usize,
    /// Largest `dist(x, y) − (φ(x) − φ(y))` over assignment pairs.
    pub max_gamma_defect: f64,
    /// Largest marginal deviation of the assignment.
    pub pushforward_deviation: f64,
}

/// Equal sub-atoms of a uniform source measure, each sent to one target.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualMap {
    pub subdivisions: usize,
    /// `(origin, sub-atom index, target)`.
    pub map: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MongeSolution {
    /// `(x, y, mass)` sorted by `(x, y)`.
    pub assignment: Vec<(usize, usize, f64)>,
    pub cost: f64,
    pub w1: f64,
    /// `cost − W₁`.
    pub gap: f64,
    pub diagnostics: Diagnostics,
    pub virtual_map: Option<VirtualMap>,
}

impl MongeSolution {
    /// True when every source carries a single target.
    pub fn is_map(&self) -> bool {
        self.assignment.windows(2).all(|w| w[0].0 != w[1].0)
    }
}

/// Every intermediate product of a solve.
#[derive(Debug, Clone)]
pub struct MongeRun {
    pub kantorovich: KantorovichSolution,
    pub structure: GammaStructure,
    pub decomposition: RayDecomposition,
    pub restriction: Restriction,
    pub plan_pieces: PlanDisintegration,
    pub problems: Vec<RayProblem1D>,
    pub couplings: Vec<Option<Coupling1D>>,
    pub solution: MongeSolution,
}

pub fn solve_monge(
    space: &MetricMeasureSpace,
    mu0: &ProbabilityMeasure,
    mu1: &ProbabilityMeasure,
    config: &MongeConfig,
) -> Result<MongeSolution> {
    run_monge(space, mu0, mu1, config).map(|r| r.solution)
}

pub fn run_monge(
    space: &MetricMeasureSpace,
    mu0: &ProbabilityMeasure,
    mu1: &ProbabilityMeasure,
    config: &MongeConfig,
) -> Result<MongeRun> {
    run_with_plan(space, mu0, mu1, config, solve_w1(space, mu0, mu1)?)
}

/// Finish a solve from an existing Kantorovich solution.
pub fn run_with_plan(
    space: &MetricMeasureSpace,
    mu0: &ProbabilityMeasure,
    mu1: &ProbabilityMeasure,
    config: &MongeConfig,
    kantorovich: KantorovichSolution,
) -> Result<MongeRun> {
    let eps = config.eps_gamma.unwrap_or_else(|| default_eps_gamma(space));
    let gamma = geodesic_closure(space, &build_gamma(space, &kantorovich, eps))?;
    let (structure, decomposition) = decompose(space, &gamma)?;
    run_from_structure(
        space,
        mu0,
        mu1,
        config,
        kantorovich,
        structure,
        decomposition,
    )
}

/// Finish a solve from an existing decomposition.
pub fn run_from_structure(
    space: &MetricMeasureSpace,
    mu0: &ProbabilityMeasure,
    mu1: &ProbabilityMeasure,
    config: &MongeConfig,
    kantorovich: KantorovichSolution,
    structure: GammaStructure,
    decomposition: RayDecomposition,
) -> Result<MongeRun> {
    let n = space.len();
    let restriction = restrict_to_transport_set(mu0, mu1, &structure, &kantorovich.plan)?;
    let reference = disintegrate_reference(space, &decomposition);
    let plan_pieces = disintegrate_plan(
        space,
        &kantorovich.plan,
        &structure,
        &decomposition,
        config.branch_threshold,
    )?;
    let problems = build_ray_problems(space, &structure, &decomposition, &reference, &plan_pieces);

    let couplings: Vec<Option<Coupling1D>> = problems
        .par_iter()
        .map(|p| {
            if p.q_mu0 <= 0.0 {
                return None;
            }
            let src: Vec<Atom> = p
                .pieces
                .iter()
                .map(|pc| Atom {
                    t: p.t[p.position(pc.proxy).unwrap()],
                    mass: pc.mass,
                    label: pc.origin,
                })
                .collect();
            let dst: Vec<Atom> = p
                .pieces
                .iter()
                .map(|pc| Atom {
                    t: p.t[p.position(pc.target).unwrap()],
                    mass: pc.mass,
                    label: pc.target,
                })
                .collect();
            Some(monotone_rearrangement(&src, &dst))
        })
        .collect();

    let mut glued: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut split_mass = 0.0;
    for (p, c) in problems.iter().zip(&couplings) {
        if let Some(c) = c {
            split_mass += c.split_mass * p.q_mu0;
            for (a, b, m) in &c.pairs {
                *glued.entry((a.label, b.label)).or_default() += m * p.q_mu0;
            }
        }
    }
    for &(x, z, m) in &plan_pieces.unresolved {
        *glued.entry((x, z)).or_default() += m;
    }
    for x in 0..n {
        if restriction.fixed[x] > 0.0 {
            *glued.entry((x, x)).or_default() += restriction.fixed[x];
        }
    }
    let assignment: Vec<(usize, usize, f64)> = glued
        .into_iter()
        .filter(|e| e.1 > 0.0)
        .map(|((x, y), m)| (x, y, m))
        .collect();

    let cost: f64 = assignment
        .iter()
        .map(|&(x, y, m)| m * space.dist(x, y))
        .sum();
    let w1 = kantorovich.value;
    let gap = cost - w1;

    let mut push0 = vec![0.0; n];
    let mut push1 = vec![0.0; n];
    for &(x, y, m) in &assignment {
        push0[x] += m;
        push1[y] += m;
    }
    let deviation = (0..n)
        .map(|x| {
            (push0[x] - mu0.mass()[x])
                .abs()
                .max((push1[x] - mu1.mass()[x]).abs())
        })
        .fold(0.0, f64::max);

    let phi = structure.potential();
    let max_gamma_defect = assignment
        .iter()
        .map(|&(x, y, _)| space.dist(x, y) - (phi[x] - phi[y]))
        .fold(0.0, f64::max);
    let w = space.weights();
    let diagnostics = Diagnostics {
        branch_mass: plan_pieces.branch_mass,
        reassigned_mass: plan_pieces.reassigned_mass,
        reassigned_cost: plan_pieces.reassigned_cost,
        unresolved_mass: plan_pieces.unresolved.iter().map(|e| e.2).sum(),
        unresolved_cost: plan_pieces
            .unresolved
            .iter()
            .map(|&(x, z, m)| m * space.dist(x, z))
            .sum(),
        split_mass,
        diagonal_mass: restriction.diagonal_mass,
        branch_weight: structure.branching().sum_of(w),
        te_weight: structure.te.sum_of(w),
        n_rays: decomposition.rays.len(),
        max_gamma_defect,
        pushforward_deviation: deviation,
    };
    if deviation > PUSHFORWARD_TOL {
        return Err(Error::PushforwardMismatch { deviation });
    }
    if let Some(max_gap) = config.max_gap {
        if gap > max_gap {
            return Err(Error::GapExceeded { gap, max_gap });
        }
    }
    let virtual_map = virtual_map(mu0, &assignment);
    Ok(MongeRun {
        kantorovich,
        structure,
        decomposition,
        restriction,
        plan_pieces,
        problems,
        couplings,
        solution: MongeSolution {
            assignment,
            cost,
            w1,
            gap,
            diagnostics,
            virtual_map,
        },
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Split each source atom into `k` equal parts so every part goes to a
/// single target. Only for sources with equal atoms and `k ≤ 64`.
pub fn virtual_map(
    mu0: &ProbabilityMeasure,
    assignment: &[(usize, usize, f64)],
) -> Option<VirtualMap> {
    let support = mu0.support();
    let atom = mu0.mass()[*support.first()?];
    if support
        .iter()
        .any(|&x| (mu0.mass()[x] - atom).abs() > 1e-12 * atom.max(1.0))
    {
        return None;
    }
    let mut k = 1usize;
    for &(x, _, m) in assignment {
        let ratio = m / mu0.mass()[x];
        let need = (1..=MAX_SUBDIVISION).find(|&d| {
            let v = ratio * d as f64;
            (v - v.round()).abs() <= 1e-9
        })?;
        k = k / gcd(k, need) * need;
        if k > MAX_SUBDIVISION {
            return None;
        }
    }
    let mut map = Vec::new();
    let mut next = BTreeMap::new();
    for &(x, y, m) in assignment {
        let parts = (m / mu0.mass()[x] * k as f64).round() as usize;
        let start = next.entry(x).or_insert(0usize);
        for s in *start..*start + parts {
            map.push((x, s, y));
        }
        *start += parts;
    }
    Some(VirtualMap {
        subdivisions: k,
        map,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayCost {
    pub ray: usize,
    pub rep: usize,
    pub length: f64,
    pub n_nodes: usize,
    pub q_mu0: f64,
    pub cost_1d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    pub w1: f64,
    pub cost: f64,
    pub gap: f64,
    pub per_ray: Vec<RayCost>,
    /// `Σ q_mu0 · cost_1d` over rays.
    pub ray_cost_sum: f64,
    /// `cost − (ray_cost_sum + reassigned_cost + unresolved_cost)`.
    pub additivity_residual: f64,
    pub diagnostics: Diagnostics,
}

/// Compare the glued cost with the Kantorovich value and break it down by ray.
pub fn duality_report(run: &MongeRun) -> DualityReport {
    let per_ray: Vec<RayCost> = run
        .problems
        .iter()
        .zip(&run.couplings)
        .map(|(p, c)| {
            let ray = &run.decomposition.rays[p.ray];
            RayCost {
                ray: p.ray,
                rep: p.rep,
                length: ray.t.last().unwrap() - ray.t[0],
                n_nodes: ray.nodes.len(),
                q_mu0: p.q_mu0,
                cost_1d: c.as_ref().map_or(0.0, cost_1d),
            }
        })
        .collect();
    let ray_cost_sum: f64 = per_ray.iter().map(|r| r.q_mu0 * r.cost_1d).sum();
    let s = &run.solution;
    let d = &s.diagnostics;
    DualityReport {
        w1: s.w1,
        cost: s.cost,
        gap: s.gap,
        additivity_residual: s.cost - (ray_cost_sum + d.reassigned_cost + d.unresolved_cost),
        ray_cost_sum,
        per_ray,
        diagnostics: d.clone(),
    }
}
