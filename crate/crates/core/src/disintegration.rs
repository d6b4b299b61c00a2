//! Conditional measures along rays: reference measure, marginals, plan and
//! the arc-length density of the reference measure.

use crate::error::{Error, Result};
use crate::kantorovich::TransportPlan;
use crate::mmspace::{MetricMeasureSpace, ProbabilityMeasure};
use crate::rays::{chain_extension, GammaStructure, RayDecomposition};

/// Mass below this is treated as absent in leak and marginal checks.
pub const MASS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDisintegration {
    /// Total reference weight of each class.
    pub q: Vec<f64>,
    /// Conditional weights per class, aligned with the ray nodes.
    pub m_y: Vec<Vec<f64>>,
    /// Classes with zero weight, excluded from one-dimensional solving.
    pub degenerate: Vec<bool>,
}

pub fn disintegrate_reference(
    space: &MetricMeasureSpace,
    dec: &RayDecomposition,
) -> ReferenceDisintegration {
    let w = space.weights();
    let mut q = Vec::with_capacity(dec.rays.len());
    let mut m_y = Vec::with_capacity(dec.rays.len());
    let mut degenerate = Vec::with_capacity(dec.rays.len());
    for ray in &dec.rays {
        let total: f64 = ray.nodes.iter().map(|&x| w[x]).sum();
        q.push(total);
        degenerate.push(total <= 0.0);
        m_y.push(
            ray.nodes
                .iter()
                .map(|&x| if total > 0.0 { w[x] / total } else { 0.0 })
                .collect(),
        );
    }
    ReferenceDisintegration { q, m_y, degenerate }
}

/// Marginals split into the part fixed in place outside the transport set
/// and the remainder, which must live on the transport set.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub fixed: Vec<f64>,
    pub diagonal_mass: f64,
}

pub fn restrict_to_transport_set(
    mu0: &ProbabilityMeasure,
    mu1: &ProbabilityMeasure,
    structure: &GammaStructure,
    plan: &TransportPlan,
) -> Result<Restriction> {
    let n = mu0.len();
    let (m0, m1) = (mu0.mass(), mu1.mass());
    for &(x, y, mass) in &plan.entries {
        if x != y && (!structure.te.contains(x) || !structure.te.contains(y)) && mass > MASS_EPS {
            return Err(Error::LeakOutsideTe { x, y, mass });
        }
    }
    let mut r = Restriction {
        mu0: m0.to_vec(),
        mu1: m1.to_vec(),
        fixed: vec![0.0; n],
        diagonal_mass: 0.0,
    };
    for x in 0..n {
        if structure.te.contains(x) {
            continue;
        }
        let shared = m0[x].min(m1[x]);
        r.fixed[x] = shared;
        r.diagonal_mass += shared;
        let left = (m0[x] - shared).max(m1[x] - shared);
        if left > MASS_EPS {
            return Err(Error::LeakOutsideTe {
                x,
                y: x,
                mass: left,
            });
        }
        r.mu0[x] = 0.0;
        r.mu1[x] = 0.0;
    }
    Ok(r)
}

/// Plan mass routed through a ray: `origin` sends `mass` to `target`, and
/// enters the ray at `proxy` (equal to `origin` unless the origin branches).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub origin: usize,
    pub proxy: usize,
    pub target: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanDisintegration {
    /// Pieces per ray with absolute masses.
    pub pieces: Vec<Vec<Piece>>,
    /// Plan mass carried by each ray.
    pub q_mu0: Vec<f64>,
    /// Plan entries from branching points with no ray node between origin
    /// and target; kept as they are.
    pub unresolved: Vec<(usize, usize, f64)>,
    /// Plan mass whose origin branches.
    pub branch_mass: f64,
    /// Part of `branch_mass` moved onto a ray through a proxy.
    pub reassigned_mass: f64,
    /// `Σ mass · dist(origin, proxy)` over reassigned pieces.
    pub reassigned_cost: f64,
}

/// Group plan mass by the ray of its origin. Mass leaving a branching point
/// enters the ray at the nearest ray node lying between origin and target
/// (ties by smallest id). With a `threshold`, branching mass above it is an
/// error instead of being reassigned.
pub fn disintegrate_plan(
    space: &MetricMeasureSpace,
    plan: &TransportPlan,
    structure: &GammaStructure,
    dec: &RayDecomposition,
    threshold: Option<f64>,
) -> Result<PlanDisintegration> {
    let g = &structure.gamma;
    let mut out = PlanDisintegration {
        pieces: vec![Vec::new(); dec.rays.len()],
        q_mu0: vec![0.0; dec.rays.len()],
        unresolved: Vec::new(),
        branch_mass: 0.0,
        reassigned_mass: 0.0,
        reassigned_cost: 0.0,
    };
    for &(x, z, mass) in &plan.entries {
        if !structure.te.contains(x) {
            continue;
        }
        let proxy = if structure.t.contains(x) {
            Some(x)
        } else {
            out.branch_mass += mass;
            structure
                .t
                .iter()
                .filter(|&s| g.contains(x, s) && g.contains(s, z))
                .min_by(|&p, &q| {
                    space
                        .dist(x, p)
                        .total_cmp(&space.dist(x, q))
                        .then(space.rank(p).cmp(&space.rank(q)))
                })
        };
        let Some(s) = proxy else {
            out.unresolved.push((x, z, mass));
            continue;
        };
        if s != x {
            out.reassigned_mass += mass;
            out.reassigned_cost += mass * space.dist(x, s);
        }
        let c = dec.class_of[s].expect("proxy lies on a ray");
        out.pieces[c].push(Piece {
            origin: x,
            proxy: s,
            target: z,
            mass,
        });
        out.q_mu0[c] += mass;
    }
    if let Some(th) = threshold {
        if out.branch_mass > th {
            return Err(Error::MassOffRays {
                mass: out.branch_mass,
                threshold: th,
            });
        }
    }
    Ok(out)
}

/// One ray as a one-dimensional problem.
///
/// `nodes`/`t` list every point the problem touches: the ray itself, its
/// extension into the branching set, and any outside targets, placed by
/// potential drop from the representative. Conditional measures are
/// normalised per ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayProblem1D {
    pub ray: usize,
    pub rep: usize,
    pub nodes: Vec<usize>,
    pub t: Vec<f64>,
    pub on_ray: Vec<bool>,
    pub m_y: Vec<f64>,
    pub mu0_y: Vec<f64>,
    pub mu1_y: Vec<f64>,
    pub h: Vec<f64>,
    pub q: f64,
    pub q_mu0: f64,
    /// Pieces with masses normalised by `q_mu0`.
    pub pieces: Vec<Piece>,
    pub degenerate: bool,
    /// Coordinates and density values of the reference profile: ray nodes
    /// plus extension nodes, where the density is zero.
    pub profile_t: Vec<f64>,
    pub profile_h: Vec<f64>,
}

impl RayProblem1D {
    pub fn position(&self, x: usize) -> Option<usize> {
        self.nodes.iter().position(|&p| p == x)
    }

    pub fn coordinate(&self, x: usize) -> Option<f64> {
        self.position(x).map(|i| self.t[i])
    }

    /// Piecewise-linear density at coordinate `s`, zero outside the profile.
    pub fn density_at(&self, s: f64) -> f64 {
        let (t, h) = (&self.profile_t, &self.profile_h);
        if t.is_empty() || s < t[0] || s > t[t.len() - 1] {
            return 0.0;
        }
        if t.len() == 1 {
            return h[0];
        }
        let i = t.partition_point(|&v| v <= s).clamp(1, t.len() - 1);
        let (a, b) = (t[i - 1], t[i]);
        if b <= a {
            return h[i];
        }
        h[i - 1] + (h[i] - h[i - 1]) * (s - a) / (b - a)
    }

    /// Reference measure of the coordinate interval `[lo, hi]`: `q` times the
    /// integral of the piecewise-linear density.
    pub fn measure_between(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let t = &self.profile_t;
        if t.len() < 2 {
            return 0.0;
        }
        let a = lo.max(t[0]);
        let b = hi.min(t[t.len() - 1]);
        if b <= a {
            return 0.0;
        }
        let mut cuts = vec![a];
        cuts.extend(t.iter().copied().filter(|&v| v > a && v < b));
        cuts.push(b);
        let integral: f64 = cuts
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.density_at(w[0]) + self.density_at(w[1])))
            .sum();
        self.q * integral
    }
}

/// Build one problem per ray from the reference and plan disintegrations.
pub fn build_ray_problems(
    space: &MetricMeasureSpace,
    structure: &GammaStructure,
    dec: &RayDecomposition,
    reference: &ReferenceDisintegration,
    plan: &PlanDisintegration,
) -> Vec<RayProblem1D> {
    let phi = structure.potential();
    dec.rays
        .iter()
        .enumerate()
        .map(|(c, ray)| {
            let place = |p: usize| phi[ray.rep] - phi[p];
            let (pre, post) = chain_extension(space, structure, ray);

            let mut profile: Vec<(f64, usize, bool)> = ray
                .nodes
                .iter()
                .zip(&ray.t)
                .map(|(&x, &s)| (s, x, true))
                .collect();
            for p in [pre, post].into_iter().flatten() {
                profile.push((place(p), p, false));
            }
            profile.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut entries = profile.clone();
            for piece in &plan.pieces[c] {
                for p in [piece.proxy, piece.target] {
                    if !entries.iter().any(|e| e.1 == p) {
                        entries.push((place(p), p, false));
                    }
                }
            }
            entries.sort_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then(space.rank(a.1).cmp(&space.rank(b.1)))
            });

            let k = entries.len();
            let nodes: Vec<usize> = entries.iter().map(|e| e.1).collect();
            let t: Vec<f64> = entries.iter().map(|e| e.0).collect();
            let on_ray: Vec<bool> = entries.iter().map(|e| e.2).collect();
            let at = |x: usize| nodes.iter().position(|&p| p == x).unwrap();

            let mut m_y = vec![0.0; k];
            for (i, &x) in ray.nodes.iter().enumerate() {
                m_y[at(x)] = reference.m_y[c][i];
            }

            let q_mu0 = plan.q_mu0[c];
            let mut mu0_y = vec![0.0; k];
            let mut mu1_y = vec![0.0; k];
            let pieces: Vec<Piece> = plan.pieces[c]
                .iter()
                .map(|p| Piece {
                    mass: p.mass / q_mu0,
                    ..*p
                })
                .collect();
            for p in &pieces {
                mu0_y[at(p.proxy)] += p.mass;
                mu1_y[at(p.target)] += p.mass;
            }

            // Density over the profile: midpoint cells, half cells at the ends.
            let pt: Vec<f64> = profile.iter().map(|e| e.0).collect();
            let ph: Vec<f64> = (0..profile.len())
                .map(|i| {
                    if !profile[i].2 {
                        return 0.0;
                    }
                    let mass = m_y[at(profile[i].1)];
                    let left = if i > 0 { pt[i] - pt[i - 1] } else { 0.0 };
                    let right = if i + 1 < pt.len() {
                        pt[i + 1] - pt[i]
                    } else {
                        0.0
                    };
                    let cell = 0.5 * (left + right);
                    if cell > 0.0 {
                        mass / cell
                    } else {
                        mass
                    }
                })
                .collect();
            let mut h = vec![0.0; k];
            for (i, e) in profile.iter().enumerate() {
                h[at(e.1)] = ph[i];
            }

            RayProblem1D {
                ray: c,
                rep: ray.rep,
                nodes,
                t,
                on_ray,
                m_y,
                mu0_y,
                mu1_y,
                h,
                q: reference.q[c],
                q_mu0,
                pieces,
                degenerate: reference.degenerate[c] || q_mu0 <= 0.0,
                profile_t: pt,
                profile_h: ph,
            }
        })
        .collect()
}

/// Largest deviation in the two reassembly identities: conditional weights
/// times class weights against the reference weights on the ray points, and
/// rescaled pieces against the plan entries they came from.
pub fn reassembly_errors(
    space: &MetricMeasureSpace,
    structure: &GammaStructure,
    plan: &TransportPlan,
    problems: &[RayProblem1D],
    disintegration: &PlanDisintegration,
) -> (f64, f64) {
    let n = space.len();
    let mut rebuilt = vec![0.0; n];
    for p in problems {
        for (i, &x) in p.nodes.iter().enumerate() {
            rebuilt[x] += p.q * p.m_y[i];
        }
    }
    let reference = (0..n)
        .map(|x| {
            let want = if structure.t.contains(x) {
                space.weights()[x]
            } else {
                0.0
            };
            (rebuilt[x] - want).abs()
        })
        .fold(0.0, f64::max);

    let mut entries: Vec<(usize, usize, f64)> = problems
        .iter()
        .flat_map(|p| {
            p.pieces
                .iter()
                .map(move |pc| (pc.origin, pc.target, pc.mass * p.q_mu0))
        })
        .collect();
    entries.extend(disintegration.unresolved.iter().copied());
    entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let on_rays: Vec<&(usize, usize, f64)> = plan
        .entries
        .iter()
        .filter(|e| structure.te.contains(e.0))
        .collect();
    let plan_err = if on_rays.len() != entries.len() {
        f64::INFINITY
    } else {
        on_rays
            .iter()
            .zip(&entries)
            .map(|(a, b)| {
                if (a.0, a.1) != (b.0, b.1) {
                    f64::INFINITY
                } else {
                    (a.2 - b.2).abs()
                }
            })
            .fold(0.0, f64::max)
    };
    (reference, plan_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kantorovich::{
        build_gamma, default_eps_gamma, geodesic_closure, solve_w1, KantorovichSolution,
    };
    use crate::mmspace::{build_space, generate_model, ModelKind, ModelParams};
    use crate::rays::decompose;

    fn line_with(weights: Vec<f64>) -> MetricMeasureSpace {
        let n = weights.len();
        let ids = (0..n).map(|i| i.to_string()).collect();
        let d = (0..n)
            .map(|i| (0..n).map(|j| (i as f64 - j as f64).abs()).collect())
            .collect();
        build_space(ids, d, weights, 1e-9).unwrap()
    }

    struct Setup {
        sol: KantorovichSolution,
        st: GammaStructure,
        dec: RayDecomposition,
    }

    fn setup(s: &MetricMeasureSpace, mu0: &ProbabilityMeasure, mu1: &ProbabilityMeasure) -> Setup {
        let sol = solve_w1(s, mu0, mu1).unwrap();
        let g = geodesic_closure(s, &build_gamma(s, &sol, default_eps_gamma(s))).unwrap();
        let (st, dec) = decompose(s, &g).unwrap();
        Setup { sol, st, dec }
    }

    #[test]
    fn conditional_weights_on_line() {
        let s = line_with(vec![1.0, 2.0, 3.0, 4.0]);
        let u = setup(
            &s,
            &ProbabilityMeasure::dirac(4, 0),
            &ProbabilityMeasure::dirac(4, 3),
        );
        let r = disintegrate_reference(&s, &u.dec);
        assert_eq!(r.q, vec![10.0]);
        assert_eq!(r.m_y[0], vec![0.1, 0.2, 0.3, 0.4]);

        let p = disintegrate_plan(&s, &u.sol.plan, &u.st, &u.dec, None).unwrap();
        assert_eq!(p.q_mu0, vec![1.0]);
        assert_eq!(
            p.pieces[0],
            vec![Piece {
                origin: 0,
                proxy: 0,
                target: 3,
                mass: 1.0
            }]
        );
        let probs = build_ray_problems(&s, &u.st, &u.dec, &r, &p);
        let (e1, e2) = reassembly_errors(&s, &u.st, &u.sol.plan, &probs, &p);
        assert!(e1 <= 1e-15 && e2 <= 1e-15);
    }

    #[test]
    fn symmetric_classes_split_evenly() {
        let m =
            generate_model(ModelKind::EuclideanGrid, &ModelParams::with_n(3).size(2.0)).unwrap();
        let s = &m.space;
        let mu0 = ProbabilityMeasure::uniform_on(9, &[0, 6]).unwrap();
        let mu1 = ProbabilityMeasure::uniform_on(9, &[2, 8]).unwrap();
        let u = setup(s, &mu0, &mu1);
        let p = disintegrate_plan(s, &u.sol.plan, &u.st, &u.dec, None).unwrap();
        assert_eq!(p.q_mu0, vec![0.5, 0.5]);
        let r = disintegrate_reference(s, &u.dec);
        assert_eq!(r.q[0], r.q[1]);
    }

    #[test]
    fn restriction_fixes_shared_mass_outside() {
        let s = line_with(vec![1.0; 4]);
        let mu0 = ProbabilityMeasure::uniform_on(4, &[0, 3]).unwrap();
        let mu1 = ProbabilityMeasure::uniform_on(4, &[1, 3]).unwrap();
        let u = setup(&s, &mu0, &mu1);
        let r = restrict_to_transport_set(&mu0, &mu1, &u.st, &u.sol.plan).unwrap();
        assert_eq!(r.diagonal_mass, 0.5);
        assert_eq!(r.mu0, vec![0.5, 0.0, 0.0, 0.0]);

        let mu = ProbabilityMeasure::uniform_on(4, &[0, 2]).unwrap();
        let u = setup(&s, &mu, &mu);
        let r = restrict_to_transport_set(&mu, &mu, &u.st, &u.sol.plan).unwrap();
        assert_eq!(r.diagonal_mass, 1.0);

        let mu1 = ProbabilityMeasure::uniform_on(4, &[2, 3]).unwrap();
        let mu0 = ProbabilityMeasure::uniform_on(4, &[0, 1]).unwrap();
        let u = setup(&s, &mu0, &mu1);
        let r = restrict_to_transport_set(&mu0, &mu1, &u.st, &u.sol.plan).unwrap();
        assert_eq!(r.diagonal_mass, 0.0);
    }

    #[test]
    fn tripod_source_mass_is_reassigned() {
        let m = generate_model(ModelKind::Tripod, &ModelParams::with_n(2)).unwrap();
        let s = &m.space;
        let ix = |id: &str| s.index_of(id).unwrap();
        let mu0 = ProbabilityMeasure::dirac(4, ix("u"));
        let mu1 = ProbabilityMeasure::uniform_on(4, &[ix("v"), ix("w")]).unwrap();
        let u = setup(s, &mu0, &mu1);
        let p = disintegrate_plan(s, &u.sol.plan, &u.st, &u.dec, None).unwrap();
        assert_eq!(p.branch_mass, 1.0);
        assert_eq!(p.reassigned_mass, 1.0);
        assert_eq!(p.reassigned_cost, 2.0);
        assert!(p.unresolved.is_empty());
        assert!(matches!(
            disintegrate_plan(s, &u.sol.plan, &u.st, &u.dec, Some(0.1)),
            Err(Error::MassOffRays { .. })
        ));
    }

    #[test]
    fn interval_density_is_constant() {
        let m = generate_model(ModelKind::Interval, &ModelParams::with_n(11)).unwrap();
        let s = &m.space;
        let mut w = s.weights().to_vec();
        w[10] = 0.0;
        let mu0 = ProbabilityMeasure::normalized(w).unwrap();
        let u = setup(s, &mu0, &ProbabilityMeasure::dirac(11, 10));
        let r = disintegrate_reference(s, &u.dec);
        let p = disintegrate_plan(s, &u.sol.plan, &u.st, &u.dec, None).unwrap();
        let probs = build_ray_problems(s, &u.st, &u.dec, &r, &p);
        assert_eq!(probs.len(), 1);
        for &h in &probs[0].h {
            assert!((h - 1.0).abs() < 1e-12, "h = {h}");
        }
        assert!((probs[0].measure_between(-0.5, 0.0) - 0.5).abs() < 1e-12);
    }
}
