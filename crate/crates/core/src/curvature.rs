//! Evolution of sets along rays towards a level set of the potential, the
//! measure contraction inequality and density bounds along rays.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::disintegration::RayProblem1D;
use crate::error::{Error, Result};
use crate::kantorovich::check_d2_monotone_order;
use crate::mmspace::{MetricMeasureSpace, PointSet};
use crate::rays::{GammaStructure, RayDecomposition};

/// Violations at or below this count as holding.
pub const HOLD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureParams {
    pub k: f64,
    pub n: f64,
}

impl CurvatureParams {
    pub fn new(k: f64, n: f64) -> Result<Self> {
        if !(n >= 1.0) || !k.is_finite() || !n.is_finite() {
            return Err(Error::DomainError(format!(
                "curvature parameters K={k}, N={n}"
            )));
        }
        Ok(Self { k, n })
    }

    fn scale(&self) -> f64 {
        (self.k.abs() / (self.n - 1.0)).sqrt()
    }

    /// Comparison function `sin(c·x)`, `x` or `sinh(c·x)` by the sign of K.
    fn s_k(&self, x: f64) -> Result<f64> {
        if self.k == 0.0 || self.n == 1.0 {
            return Ok(x);
        }
        let c = self.scale();
        if self.k > 0.0 {
            if c * x >= PI {
                return Err(Error::DomainError(format!(
                    "argument {} reaches pi for K={}, N={}",
                    c * x,
                    self.k,
                    self.n
                )));
            }
            Ok((c * x).sin())
        } else {
            Ok((c * x).sinh())
        }
    }
}

/// `sin((1−t)θc) / sin(θc)` with `c = √(K/(N−1))`; `1 − t` when K = 0 or
/// θ = 0, hyperbolic sine for K < 0, and 1 when N = 1.
pub fn distortion_coefficient(k: f64, n: f64, t: f64, theta: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    if k == 0.0 {
        return Ok(1.0 - t);
    }
    if n == 1.0 {
        return Ok(1.0);
    }
    if theta == 0.0 {
        return Ok(1.0 - t);
    }
    let p = CurvatureParams::new(k, n)?;
    let den = p.s_k(theta)?;
    let num = p.s_k((1.0 - t) * theta)?;
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionSetup {
    pub c: PointSet,
    pub delta: f64,
    pub level_tol: f64,
    pub level_set: Vec<usize>,
    /// Points of `c` with a partner on the level set.
    pub c_delta: PointSet,
    /// Partner of each point of `c_delta`.
    pub target: Vec<Option<usize>>,
    /// Points of `c` without a partner.
    pub excluded: Vec<usize>,
    /// Outcome of the potential order certificate on the target graph.
    pub d2_certified: bool,
}

impl EvolutionSetup {
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.c_delta
            .iter()
            .map(|x| (x, self.target[x].unwrap()))
            .collect()
    }
}

/// Largest gap between consecutive nodes over all rays.
pub fn max_ray_spacing(dec: &RayDecomposition) -> f64 {
    dec.rays
        .iter()
        .flat_map(|r| r.t.windows(2).map(|w| w[1] - w[0]))
        .fold(0.0, f64::max)
}

/// Pair every point of `c` with a saturated partner on the level set
/// `{|φ − δ| ≤ level_tol}`: nearest potential to δ first, then smallest id.
pub fn build_evolution(
    space: &MetricMeasureSpace,
    structure: &GammaStructure,
    dec: &RayDecomposition,
    c: &PointSet,
    delta: f64,
    level_tol: Option<f64>,
) -> Result<EvolutionSetup> {
    if let Some(x) = c.iter().find(|&x| !structure.t.contains(x)) {
        return Err(Error::NotInTransportSet { x });
    }
    let phi = structure.potential();
    let tol = level_tol.unwrap_or_else(|| {
        let s = max_ray_spacing(dec);
        if s > 0.0 {
            s
        } else {
            space.mesh()
        }
    });
    let n = space.len();
    let level_set: Vec<usize> = (0..n).filter(|&y| (phi[y] - delta).abs() <= tol).collect();
    if level_set.is_empty() {
        return Err(Error::EmptyLevelSet { delta, tol });
    }
    let mut target = vec![None; n];
    let mut c_delta = PointSet::empty(n);
    let mut excluded = Vec::new();
    for x in c.iter() {
        let best = level_set
            .iter()
            .copied()
            .filter(|&y| structure.gamma.contains(x, y))
            .min_by(|&p, &q| {
                (phi[p] - delta)
                    .abs()
                    .total_cmp(&(phi[q] - delta).abs())
                    .then(space.rank(p).cmp(&space.rank(q)))
            });
        match best {
            Some(y) => {
                target[x] = Some(y);
                c_delta.insert(x);
            }
            None => excluded.push(x),
        }
    }
    let pairs: Vec<(usize, usize)> = c_delta.iter().map(|x| (x, target[x].unwrap())).collect();
    Ok(EvolutionSetup {
        c: c.clone(),
        delta,
        level_tol: tol,
        level_set,
        c_delta,
        target,
        excluded,
        d2_certified: check_d2_monotone_order(&pairs, phi),
    })
}

/// Image of a set under the evolution at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolvedSet {
    /// Continuous images of the runs of consecutive ray nodes:
    /// `(ray, lo, hi)` in ray coordinates.
    pub intervals: Vec<(usize, f64, f64)>,
    /// Each point's image snapped to the nearest node of its ray problem.
    pub nodes: PointSet,
}

/// Runs of consecutive ray nodes of `a`, as `(ray, first index, last index)`.
fn runs(dec: &RayDecomposition, a: &PointSet) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (r, ray) in dec.rays.iter().enumerate() {
        let mut start: Option<usize> = None;
        for i in 0..=ray.nodes.len() {
            let inside = i < ray.nodes.len() && a.contains(ray.nodes[i]);
            match (inside, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    out.push((r, s, i - 1));
                    start = None;
                }
                _ => {}
            }
        }
    }
    out
}

/// Move each point of `a` the fraction `t` of the way to its target along
/// its ray. Runs of consecutive ray nodes are carried as intervals.
pub fn evolve(
    setup: &EvolutionSetup,
    structure: &GammaStructure,
    dec: &RayDecomposition,
    problems: &[RayProblem1D],
    a: &PointSet,
    t: f64,
) -> EvolvedSet {
    let phi = structure.potential();
    let n = phi.len();
    let image = |r: usize, x: usize, s: f64| {
        let rep = dec.rays[r].rep;
        let goal = phi[rep] - phi[setup.target[x].expect("point of C_delta")];
        s + t * (goal - s)
    };
    let mut intervals = Vec::new();
    let mut nodes = PointSet::empty(n);
    for (r, i, j) in runs(dec, &a_in(setup, a)) {
        let ray = &dec.rays[r];
        let lo = image(r, ray.nodes[i], ray.t[i]);
        let hi = image(r, ray.nodes[j], ray.t[j]);
        intervals.push((r, lo.min(hi), lo.max(hi)));
        let p = &problems[r];
        for k in i..=j {
            let s = image(r, ray.nodes[k], ray.t[k]);
            let nearest = (0..p.t.len())
                .min_by(|&u, &v| (p.t[u] - s).abs().total_cmp(&(p.t[v] - s).abs()))
                .unwrap();
            nodes.insert(p.nodes[nearest]);
        }
    }
    EvolvedSet { intervals, nodes }
}

fn a_in(setup: &EvolutionSetup, a: &PointSet) -> PointSet {
    PointSet::from_indices(
        a.universe(),
        a.iter().filter(|&x| setup.c_delta.contains(x)),
    )
}

/// Reference measure of a union of ray intervals, from the interpolated
/// density of each ray.
pub fn interval_measure(problems: &[RayProblem1D], intervals: &[(usize, f64, f64)]) -> f64 {
    intervals
        .iter()
        .map(|&(r, lo, hi)| problems[r].measure_between(lo, hi))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McpRow {
    pub t: f64,
    pub measure_a: f64,
    pub measure_at: f64,
    pub bound: f64,
    pub residual: f64,
}

/// Residuals `m(A_t) − (1−t)·inf σ^{N−1}·m(A)` for each time in `ts`, the
/// infimum running over `C_δ`.
#[allow(clippy::too_many_arguments)]
pub fn mcp_check(
    space: &MetricMeasureSpace,
    params: &CurvatureParams,
    setup: &EvolutionSetup,
    structure: &GammaStructure,
    dec: &RayDecomposition,
    problems: &[RayProblem1D],
    a: &PointSet,
    ts: &[f64],
) -> Result<Vec<McpRow>> {
    let base = evolve(setup, structure, dec, problems, a, 0.0);
    let measure_a = interval_measure(problems, &base.intervals);
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::DomainError(format!("time {t} outside [0, 1]")));
        }
        let mut inf = f64::INFINITY;
        for x in setup.c_delta.iter() {
            let theta = space.dist(x, setup.target[x].unwrap());
            let sigma = distortion_coefficient(params.k, params.n, t, theta)?;
            inf = inf.min(sigma.powf(params.n - 1.0));
        }
        if !inf.is_finite() {
            inf = 1.0;
        }
        let at = evolve(setup, structure, dec, problems, a, t);
        let measure_at = interval_measure(problems, &at.intervals);
        let bound = (1.0 - t) * inf * measure_a;
        rows.push(McpRow {
            t,
            measure_a,
            measure_at,
            bound,
            residual: measure_at - bound,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadruple {
    pub sigma_minus: f64,
    pub s: f64,
    pub tau: f64,
    pub sigma_plus: f64,
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
    /// `max(lower − ratio, ratio − upper, 0)`.
    pub violation: f64,
    /// `s` or `τ` sits at an end of the profile or off the ray.
    pub endpoint: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DensityReport {
    pub rows: Vec<Quadruple>,
    /// Quadruples skipped because the density vanishes at `s`.
    pub zero_density: usize,
    /// Quadruples skipped because an argument left the domain.
    pub out_of_domain: usize,
}

impl DensityReport {
    /// Fraction of interior quadruples that hold, and their worst violation.
    pub fn interior_summary(&self) -> (usize, f64, f64) {
        let interior: Vec<&Quadruple> = self.rows.iter().filter(|q| !q.endpoint).collect();
        let held = interior.iter().filter(|q| q.violation <= HOLD_TOL).count();
        let worst = interior.iter().map(|q| q.violation).fold(0.0, f64::max);
        let frac = if interior.is_empty() {
            1.0
        } else {
            held as f64 / interior.len() as f64
        };
        (interior.len(), frac, worst)
    }
}

/// Check the two-sided density bounds on quadruples
/// `σ₋ < s ≤ τ < σ₊` of profile nodes; all quadruples when there are at
/// most `samples` of them, otherwise `samples` seeded draws.
pub fn density_bound_check(
    problem: &RayProblem1D,
    params: &CurvatureParams,
    samples: usize,
    seed: u64,
) -> DensityReport {
    let t = &problem.profile_t;
    let h = &problem.profile_h;
    let m = t.len();
    let mut report = DensityReport::default();
    if m < 3 {
        return report;
    }
    let end = |i: usize| i == 0 || i == m - 1 || is_off_ray(problem, i);
    let mut eval = |i: usize, j: usize, k: usize, l: usize| {
        let (sm, s, tau, sp) = (t[i], t[j], t[k], t[l]);
        if !(sm < s && s <= tau && tau < sp) {
            return;
        }
        if h[j] <= 0.0 {
            report.zero_density += 1;
            return;
        }
        let bounds = (|| -> Result<(f64, f64)> {
            let e = params.n - 1.0;
            let lower = (params.s_k(sp - tau)? / params.s_k(sp - s)?).powf(e);
            let upper = (params.s_k(tau - sm)? / params.s_k(s - sm)?).powf(e);
            Ok((lower, upper))
        })();
        let Ok((lower, upper)) = bounds else {
            report.out_of_domain += 1;
            return;
        };
        let ratio = h[k] / h[j];
        let violation = (lower - ratio).max(ratio - upper).max(0.0);
        report.rows.push(Quadruple {
            sigma_minus: sm,
            s,
            tau,
            sigma_plus: sp,
            ratio,
            lower,
            upper,
            violation,
            endpoint: end(j) || end(k),
        });
    };
    // Index choices (i, j, k, l) with i < j <= k < l.
    let total = {
        let mm = m as u128;
        // Quadruples with j < k plus those with j == k.
        mm * (mm - 1) * (mm - 2) * (mm - 3) / 24 + mm * (mm - 1) * (mm - 2) / 6
    };
    if total <= samples as u128 {
        for i in 0..m {
            for j in (i + 1)..m {
                for k in j..m {
                    for l in (k + 1)..m {
                        eval(i, j, k, l);
                    }
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for draw in 0..samples {
            // Alternate between distinct and coinciding middle indices.
            if draw % 8 == 7 {
                let mut v = sample(&mut rng, m, 3).into_vec();
                v.sort_unstable();
                eval(v[0], v[1], v[1], v[2]);
            } else {
                let mut v = sample(&mut rng, m, 4).into_vec();
                v.sort_unstable();
                eval(v[0], v[1], v[2], v[3]);
            }
        }
    }
    report
}

fn is_off_ray(problem: &RayProblem1D, profile_index: usize) -> bool {
    let s = problem.profile_t[profile_index];
    !problem
        .t
        .iter()
        .zip(&problem.on_ray)
        .any(|(&ti, &on)| on && ti == s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmspace::{generate_model, ModelKind, ModelParams, ProbabilityMeasure};
    use crate::monge::{run_monge, MongeConfig, MongeRun};

    #[test]
    fn distortion_special_cases() {
        assert_eq!(distortion_coefficient(1.0, 3.0, 0.0, 2.0).unwrap(), 1.0);
        assert_eq!(distortion_coefficient(0.0, 3.0, 0.25, 2.0).unwrap(), 0.75);
        assert_eq!(distortion_coefficient(1.0, 3.0, 0.25, 0.0).unwrap(), 0.75);
        assert_eq!(distortion_coefficient(1.0, 1.0, 0.25, 1.0).unwrap(), 1.0);
        let v = distortion_coefficient(1.0, 2.0, 0.5, PI / 2.0).unwrap();
        assert!((v - 2f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(matches!(
            distortion_coefficient(1.0, 2.0, 0.5, 4.0),
            Err(Error::DomainError(_))
        ));
        let neg = distortion_coefficient(-1.0, 2.0, 0.5, 1.0).unwrap();
        assert!((neg - 0.5f64.sinh() / 1f64.sinh()).abs() < 1e-15);
    }

    #[test]
    fn distortion_is_continuous_at_flat() {
        for &k in &[1e-8, -1e-8, 1e-10] {
            for &t in &[0.1, 0.5, 0.9] {
                let v = distortion_coefficient(k, 3.0, t, 1.5).unwrap();
                assert!((v - (1.0 - t)).abs() <= 1e-6);
            }
        }
    }

    fn interval_run(n: usize) -> (MetricMeasureSpace, MongeRun) {
        let m = generate_model(ModelKind::Interval, &ModelParams::with_n(n)).unwrap();
        let s = m.space;
        let mut w = s.weights().to_vec();
        w[n - 1] = 0.0;
        let mu0 = ProbabilityMeasure::normalized(w).unwrap();
        let mu1 = ProbabilityMeasure::dirac(n, n - 1);
        let run = run_monge(&s, &mu0, &mu1, &MongeConfig::default()).unwrap();
        (s, run)
    }

    #[test]
    fn line_targets_and_trivial_evolution() {
        let (s, run) = interval_run(4);
        let all = PointSet::full(4);
        let setup =
            build_evolution(&s, &run.structure, &run.decomposition, &all, 0.0, None).unwrap();
        assert_eq!(setup.target, vec![Some(3); 4]);
        assert!(setup.d2_certified);

        let phi = run.structure.potential();
        let one = PointSet::from_indices(4, [1]);
        let setup = build_evolution(
            &s,
            &run.structure,
            &run.decomposition,
            &one,
            phi[1],
            Some(1e-12),
        )
        .unwrap();
        assert_eq!(setup.target[1], Some(1));
    }

    #[test]
    fn left_half_contracts_to_quarter() {
        let (s, run) = interval_run(11);
        let all = PointSet::full(11);
        let setup =
            build_evolution(&s, &run.structure, &run.decomposition, &all, 0.0, None).unwrap();
        let left = PointSet::from_indices(11, 0..=5);
        let params = CurvatureParams::new(0.0, 1.0).unwrap();
        let rows = mcp_check(
            &s,
            &params,
            &setup,
            &run.structure,
            &run.decomposition,
            &run.problems,
            &left,
            &[0.0, 0.5, 1.0],
        )
        .unwrap();
        assert_eq!(rows[0].residual, 0.0);
        assert!((rows[0].measure_a - 0.5).abs() < 1e-12);
        assert!((rows[1].measure_at - 0.25).abs() < 1e-12);
        assert!(rows[1].residual.abs() < 1e-12);
        assert!(rows[2].measure_at.abs() < 1e-12);

        let at_one = evolve(
            &setup,
            &run.structure,
            &run.decomposition,
            &run.problems,
            &left,
            1.0,
        );
        assert_eq!(at_one.nodes.to_vec(), vec![10]);
        let at_zero = evolve(
            &setup,
            &run.structure,
            &run.decomposition,
            &run.problems,
            &left,
            0.0,
        );
        assert_eq!(at_zero.nodes, left);
    }

    #[test]
    fn flat_density_bounds_hold() {
        let (_, run) = interval_run(9);
        let params = CurvatureParams::new(0.0, 3.0).unwrap();
        let rep = density_bound_check(&run.problems[0], &params, 100_000, 1);
        assert!(!rep.rows.is_empty());
        assert!(rep.rows.iter().all(|q| q.violation <= HOLD_TOL));
        let same = rep.rows.iter().find(|q| q.s == q.tau).unwrap();
        assert_eq!((same.lower, same.upper, same.ratio), (1.0, 1.0, 1.0));
    }

    #[test]
    fn c_outside_transport_set_is_rejected() {
        let m = generate_model(ModelKind::Tripod, &ModelParams::with_n(2)).unwrap();
        let s = &m.space;
        let ix = |id: &str| s.index_of(id).unwrap();
        let mu0 = ProbabilityMeasure::dirac(4, ix("u"));
        let mu1 = ProbabilityMeasure::uniform_on(4, &[ix("v"), ix("w")]).unwrap();
        let run = run_monge(s, &mu0, &mu1, &MongeConfig::default()).unwrap();
        let c = PointSet::from_indices(4, [ix("c")]);
        assert_eq!(
            build_evolution(s, &run.structure, &run.decomposition, &c, 0.0, None).unwrap_err(),
            Error::NotInTransportSet { x: ix("c") }
        );
    }
}
