//! Transport set, branching points, transport rays and the ray map.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kantorovich::GammaSet;
use crate::mmspace::{MetricMeasureSpace, PointSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// Evidence that `x` branches: `z` and `w` are both reachable from `x`
/// (forward) or both reach `x` (backward), yet are not on a common ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchWitness {
    pub x: usize,
    pub z: usize,
    pub w: usize,
    pub direction: Direction,
}

#[derive(Debug, Clone)]
pub struct GammaStructure {
    pub gamma: GammaSet,
    /// Initial points: no incoming pair at positive distance.
    pub a: PointSet,
    /// Final points: no outgoing pair at positive distance.
    pub b: PointSet,
    /// Transport set with end points.
    pub te: PointSet,
    pub a_plus: PointSet,
    pub a_minus: PointSet,
    /// Transport set without branching points.
    pub t: PointSet,
    pub witnesses: Vec<BranchWitness>,
}

impl GammaStructure {
    pub fn potential(&self) -> &[f64] {
        &self.gamma.potential
    }

    pub fn related(&self, x: usize, y: usize) -> bool {
        self.gamma.related(x, y)
    }

    pub fn branching(&self) -> PointSet {
        self.a_plus.union(&self.a_minus)
    }
}

/// Transport set and end points by a direct scan of the off-diagonal pairs.
/// The branching sets start empty and `t` equals `te`.
pub fn transport_sets(gamma: &GammaSet) -> GammaStructure {
    let n = gamma.len_points();
    let mut out_deg = vec![false; n];
    let mut in_deg = vec![false; n];
    for (x, y) in gamma.pairs() {
        if x != y {
            out_deg[x] = true;
            in_deg[y] = true;
        }
    }
    let te = PointSet::from_indices(n, (0..n).filter(|&x| out_deg[x] || in_deg[x]));
    GammaStructure {
        gamma: gamma.clone(),
        a: PointSet::from_indices(n, (0..n).filter(|&x| !in_deg[x])),
        b: PointSet::from_indices(n, (0..n).filter(|&x| !out_deg[x])),
        t: te.clone(),
        te,
        a_plus: PointSet::empty(n),
        a_minus: PointSet::empty(n),
        witnesses: Vec::new(),
    }
}

fn find_split(gamma: &GammaSet, fan: &[usize]) -> Option<(usize, usize)> {
    for (i, &z) in fan.iter().enumerate() {
        for &w in &fan[i + 1..] {
            if !gamma.related(z, w) {
                return Some((z, w));
            }
        }
    }
    None
}

/// Flag forward branching points (two saturated successors not on a common
/// ray) and backward branching points (the same for predecessors). Fills
/// `a_plus`, `a_minus`, `t` and one witness per flagged point and direction.
pub fn detect_branching(structure: &mut GammaStructure) {
    let n = structure.gamma.len_points();
    let gamma = &structure.gamma;
    let te: Vec<usize> = structure.te.to_vec();
    let found: Vec<Vec<BranchWitness>> = te
        .par_iter()
        .map(|&x| {
            let mut out = Vec::new();
            if let Some((z, w)) = find_split(gamma, &gamma.forward(x)) {
                out.push(BranchWitness {
                    x,
                    z,
                    w,
                    direction: Direction::Forward,
                });
            }
            if let Some((z, w)) = find_split(gamma, &gamma.backward(x)) {
                out.push(BranchWitness {
                    x,
                    z,
                    w,
                    direction: Direction::Backward,
                });
            }
            out
        })
        .collect();
    let mut a_plus = PointSet::empty(n);
    let mut a_minus = PointSet::empty(n);
    let mut witnesses = Vec::new();
    for w in found.into_iter().flatten() {
        match w.direction {
            Direction::Forward => a_plus.insert(w.x),
            Direction::Backward => a_minus.insert(w.x),
        }
        witnesses.push(w);
    }
    structure.t = structure.te.difference(&a_plus.union(&a_minus));
    structure.a_plus = a_plus;
    structure.a_minus = a_minus;
    structure.witnesses = witnesses;
}

/// One transport ray: its representative and its nodes in increasing
/// coordinate order (decreasing potential).
#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    pub rep: usize,
    pub nodes: Vec<usize>,
    pub t: Vec<f64>,
}

impl Ray {
    /// Index of the node with coordinate closest to `s`.
    pub fn nearest_node(&self, s: f64) -> usize {
        let mut best = 0;
        for (i, &ti) in self.t.iter().enumerate() {
            if (ti - s).abs() < (self.t[best] - s).abs() {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RayDecomposition {
    /// Equivalence classes, each listed in increasing index order.
    pub classes: Vec<Vec<usize>>,
    /// Class of each point of `t`, `None` elsewhere.
    pub class_of: Vec<Option<usize>>,
    /// Representative of each class.
    pub section: Vec<usize>,
    /// Per-class rays, filled by [`ray_map`].
    pub rays: Vec<Ray>,
    /// Coordinate of each point of `t` on its ray.
    pub coord: Vec<Option<f64>>,
}

impl RayDecomposition {
    /// Representative of the class containing `x`.
    pub fn f(&self, x: usize) -> Option<usize> {
        self.class_of[x].map(|c| self.section[c])
    }

    /// The point at coordinate `t` on ray `ray`, if one lies within `tol`.
    pub fn g(&self, ray: usize, t: f64, tol: f64) -> Option<usize> {
        let r = &self.rays[ray];
        let i = r.nearest_node(t);
        ((r.t[i] - t).abs() <= tol).then_some(r.nodes[i])
    }

    /// Inverse of [`Self::g`]: ray index and coordinate of `x`.
    pub fn g_inv(&self, x: usize) -> Option<(usize, f64)> {
        Some((self.class_of[x]?, self.coord[x]?))
    }
}

/// Connected components of the ray relation restricted to `t`, with
/// transitivity checked on every pair of every class.
pub fn build_equivalence(structure: &GammaStructure) -> Result<RayDecomposition> {
    let n = structure.gamma.len_points();
    let members = structure.t.to_vec();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (i, &x) in members.iter().enumerate() {
        for &y in &members[i + 1..] {
            if structure.related(x, y) {
                let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                if rx != ry {
                    parent[rx.max(ry)] = rx.min(ry);
                }
            }
        }
    }
    let mut class_of = vec![None; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut label = vec![usize::MAX; n];
    for &x in &members {
        let r = find(&mut parent, x);
        if label[r] == usize::MAX {
            label[r] = classes.len();
            classes.push(Vec::new());
        }
        classes[label[r]].push(x);
        class_of[x] = Some(label[r]);
    }

    let failures: Vec<Option<Error>> = classes
        .par_iter()
        .map(|class| {
            for (i, &x) in class.iter().enumerate() {
                for &y in &class[i + 1..] {
                    if !structure.related(x, y) {
                        return Some(transitivity_witness(structure, class, x, y));
                    }
                }
            }
            None
        })
        .collect();
    if let Some(e) = failures.into_iter().flatten().next() {
        return Err(e);
    }
    Ok(RayDecomposition {
        classes,
        class_of,
        section: Vec::new(),
        rays: Vec::new(),
        coord: vec![None; n],
    })
}

/// Shortest chain of related class members from `x` to `y`; its first three
/// nodes form a triple that breaks transitivity.
fn transitivity_witness(structure: &GammaStructure, class: &[usize], x: usize, y: usize) -> Error {
    let mut prev = vec![usize::MAX; class.len()];
    let pos = |p: usize| class.iter().position(|&c| c == p).unwrap();
    let (sx, sy) = (pos(x), pos(y));
    prev[sx] = sx;
    let mut queue = VecDeque::from([sx]);
    while let Some(u) = queue.pop_front() {
        if u == sy {
            break;
        }
        for v in 0..class.len() {
            if prev[v] == usize::MAX && structure.related(class[u], class[v]) {
                prev[v] = u;
                queue.push_back(v);
            }
        }
    }
    let mut path = vec![sy];
    while *path.last().unwrap() != sx {
        path.push(prev[*path.last().unwrap()]);
    }
    path.reverse();
    Error::TransitivityFailure {
        x: class[path[0]],
        z: class[path[1]],
        y: class[path[2]],
    }
}

/// Pick the member with median potential as each class representative
/// (lower median in decreasing-potential order, ties by smallest id).
pub fn cross_section(
    space: &MetricMeasureSpace,
    structure: &GammaStructure,
    decomposition: &mut RayDecomposition,
) {
    let phi = structure.potential();
    decomposition.section = decomposition
        .classes
        .iter()
        .map(|class| {
            let mut sorted = class.clone();
            sorted.sort_by(|&p, &q| {
                phi[q]
                    .total_cmp(&phi[p])
                    .then(space.rank(p).cmp(&space.rank(q)))
            });
            sorted[(sorted.len() - 1) / 2]
        })
        .collect();
}

/// Order each class by decreasing potential and attach signed arc-length
/// coordinates from its representative, checking that consecutive nodes
/// form a chain: potential drop, coordinate step and distance all agree.
pub fn ray_map(
    space: &MetricMeasureSpace,
    structure: &GammaStructure,
    decomposition: &mut RayDecomposition,
) -> Result<()> {
    let phi = structure.potential();
    let tol = structure.gamma.tol + space.geo_tol();
    let mut rays = Vec::with_capacity(decomposition.classes.len());
    for (ci, class) in decomposition.classes.iter().enumerate() {
        let rep = decomposition.section[ci];
        let mut nodes = class.clone();
        nodes.sort_by(|&p, &q| {
            phi[q]
                .total_cmp(&phi[p])
                .then(space.rank(p).cmp(&space.rank(q)))
        });
        let mut t = Vec::with_capacity(nodes.len());
        for &x in &nodes {
            let d = space.dist(x, rep);
            let s = if x == rep {
                0.0
            } else if phi[x] < phi[rep] {
                d
            } else {
                -d
            };
            t.push(s);
        }
        for i in 1..nodes.len() {
            let (p, q) = (nodes[i - 1], nodes[i]);
            let dphi = phi[p] - phi[q];
            let dt = t[i] - t[i - 1];
            let fail = |reason: String| Error::NotAChain {
                ray: ci,
                x: p,
                y: q,
                reason,
            };
            if dphi <= structure.gamma.tol {
                return Err(fail(format!(
                    "potential drop {dphi} between distinct nodes"
                )));
            }
            if (dphi - dt).abs() > tol {
                return Err(fail(format!(
                    "potential drop {dphi} but coordinate step {dt}"
                )));
            }
            if (space.dist(p, q) - dt).abs() > tol {
                return Err(fail(format!(
                    "distance {} but coordinate step {dt}",
                    space.dist(p, q)
                )));
            }
        }
        for (&x, &s) in nodes.iter().zip(&t) {
            decomposition.coord[x] = Some(s);
        }
        rays.push(Ray { rep, nodes, t });
    }
    decomposition.rays = rays;
    Ok(())
}

/// Nearest points of the transport set outside `t` that extend ray `ray`
/// backwards and forwards along saturated pairs.
pub fn chain_extension(
    space: &MetricMeasureSpace,
    structure: &GammaStructure,
    ray: &Ray,
) -> (Option<usize>, Option<usize>) {
    let first = ray.nodes[0];
    let last = *ray.nodes.last().unwrap();
    let outside = structure.te.difference(&structure.t);
    let pick = |ok: &dyn Fn(usize) -> bool, anchor: usize| {
        outside.iter().filter(|&p| ok(p)).min_by(|&p, &q| {
            space
                .dist(p, anchor)
                .total_cmp(&space.dist(q, anchor))
                .then(space.rank(p).cmp(&space.rank(q)))
        })
    };
    let g = &structure.gamma;
    (
        pick(&|p| g.contains(p, first), first),
        pick(&|p| g.contains(last, p), last),
    )
}

/// Run the whole decomposition: transport sets, branching, classes,
/// section and ray map.
pub fn decompose(
    space: &MetricMeasureSpace,
    gamma: &GammaSet,
) -> Result<(GammaStructure, RayDecomposition)> {
    let mut structure = transport_sets(gamma);
    detect_branching(&mut structure);
    let mut dec = build_equivalence(&structure)?;
    cross_section(space, &structure, &mut dec);
    ray_map(space, &structure, &mut dec)?;
    Ok((structure, dec))
}
