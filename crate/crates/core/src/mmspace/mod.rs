//! Finite geodesic metric measure spaces.
//!
//! A space is a finite set of labelled points with a dense distance matrix,
//! a reference measure given by nonnegative point weights, and a geodesic
//! step graph used to realise discrete shortest paths. Spaces come either
//! from a full distance matrix or from a weighted graph whose distances are
//! completed by all-pairs shortest paths.

mod geodesic;
mod models;

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub use geodesic::{shortest_path, DiscreteGeodesic};
pub use models::{generate_model, Model, ModelKind, ModelParams};

/// Largest point count accepted in matrix mode.
pub const DENSE_LIMIT: usize = 5_000;

/// Default geodesic slack for spaces whose distances are exact.
pub const EXACT_GEO_TOL: f64 = 1e-9;

/// Absolute slack on the triangle inequality, scaled by `max(1, diameter)`.
const TRIANGLE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    Matrix,
    Graph,
}

impl InputMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            InputMode::Matrix => "matrix",
            InputMode::Graph => "graph",
        }
    }
}

/// An undirected weighted edge between point indices, for graph input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct MetricMeasureSpace {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    dist: Vec<f64>,
    weights: Vec<f64>,
    geo_tol: f64,
    mode: InputMode,
    edges: Vec<Edge>,
    steps: Vec<Vec<usize>>,
    rank: Vec<usize>,
}

impl MetricMeasureSpace {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[inline]
    pub fn dist(&self, x: usize, y: usize) -> f64 {
        self.dist[x * self.ids.len() + y]
    }

    /// Row `x` of the distance matrix.
    pub fn dist_row(&self, x: usize) -> &[f64] {
        let n = self.ids.len();
        &self.dist[x * n..(x + 1) * n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn geo_tol(&self) -> f64 {
        self.geo_tol
    }

    pub fn mode(&self) -> InputMode {
        self.mode
    }

    /// Graph edges as supplied (graph mode only).
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, x: usize) -> &str {
        &self.ids[x]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownPoint(id.to_string()))
    }

    /// Geodesic step neighbours of `x`, sorted by id.
    pub(crate) fn steps(&self, x: usize) -> &[usize] {
        &self.steps[x]
    }

    /// Position of `x` in the lexicographic order of point ids. All
    /// "smallest id" tie-breaks compare ranks.
    #[inline]
    pub fn rank(&self, x: usize) -> usize {
        self.rank[x]
    }

    /// Largest finite pairwise distance.
    pub fn diameter(&self) -> f64 {
        self.dist
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    }

    /// Largest nearest-neighbour distance over all points.
    pub fn mesh(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|x| {
                (0..n)
                    .filter(|&y| y != x)
                    .map(|y| self.dist(x, y))
                    .fold(f64::INFINITY, f64::min)
            })
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    }

    /// Connected components of the finite-distance relation, labelled by
    /// the smallest member index order.
    pub fn components(&self) -> Vec<usize> {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for x in 0..n {
            if label[x] != usize::MAX {
                continue;
            }
            for y in 0..n {
                if self.dist(x, y).is_finite() {
                    label[y] = next;
                }
            }
            next += 1;
        }
        label
    }
}

fn build_index(points: &[String]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if index.insert(p.clone(), i).is_some() {
            return Err(Error::Shape(format!("duplicate point id {p:?}")));
        }
    }
    Ok(index)
}

fn id_ranks(points: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].cmp(&points[b]));
    let mut rank = vec![0; points.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

fn sort_steps(steps: &mut [Vec<usize>], rank: &[usize]) {
    for s in steps {
        s.sort_by_key(|&y| rank[y]);
        s.dedup();
    }
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::Shape(format!(
            "{} weights for {} points",
            weights.len(),
            n
        )));
    }
    if let Some((i, w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !w.is_finite() || **w < 0.0)
    {
        return Err(Error::InvalidEntry(format!("weight {w} at point {i}")));
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::ZeroMeasure);
    }
    Ok(())
}

/// Validate a full distance matrix and build the space.
///
/// Checks zero diagonal, symmetry, positivity off the diagonal and the
/// triangle inequality (reporting the worst triple). The same cubic pass
/// records which pairs have no sample point between them; those pairs are
/// the steps of discrete geodesics.
pub fn build_space(
    points: Vec<String>,
    dist: Vec<Vec<f64>>,
    weights: Vec<f64>,
    geo_tol: f64,
) -> Result<MetricMeasureSpace> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Shape("no points".into()));
    }
    if n > DENSE_LIMIT {
        return Err(Error::DenseTooLarge {
            n,
            limit: DENSE_LIMIT,
        });
    }
    if !(geo_tol >= 0.0 && geo_tol.is_finite()) {
        return Err(Error::InvalidEntry(format!("geo_tol {geo_tol}")));
    }
    let index = build_index(&points)?;
    if dist.len() != n || dist.iter().any(|row| row.len() != n) {
        return Err(Error::Shape(format!("distance matrix is not {n}x{n}")));
    }
    check_weights(&weights, n)?;

    let mut flat = Vec::with_capacity(n * n);
    for (i, row) in dist.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidEntry(format!("distance {d} at ({i},{j})")));
            }
            flat.push(d);
        }
    }
    for i in 0..n {
        if flat[i * n + i] != 0.0 {
            return Err(Error::InvalidEntry(format!(
                "nonzero self-distance {} at point {i}",
                flat[i * n + i]
            )));
        }
        for j in (i + 1)..n {
            let (dij, dji) = (flat[i * n + j], flat[j * n + i]);
            if (dij - dji).abs() > TRIANGLE_SLACK * dij.max(1.0) {
                return Err(Error::AsymmetricDistance {
                    x: i,
                    y: j,
                    dxy: dij,
                    dyx: dji,
                });
            }
            if dij == 0.0 {
                return Err(Error::CoincidentPoints { x: i, y: j });
            }
        }
    }

    let diam = flat.iter().copied().fold(0.0, f64::max);
    let slack = TRIANGLE_SLACK * diam.max(1.0);
    let d = &flat;
    // Per row: worst triangle excess and the list of geodesic steps.
    let rows: Vec<((f64, usize, usize), Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|x| {
            let rx = &d[x * n..(x + 1) * n];
            let mut worst = (0.0f64, usize::MAX, usize::MAX);
            let mut steps = Vec::new();
            for y in 0..n {
                if y == x {
                    continue;
                }
                let ry = &d[y * n..(y + 1) * n];
                let dxy = rx[y];
                let mut atomic = true;
                for z in 0..n {
                    if z == x || z == y {
                        continue;
                    }
                    let via = rx[z] + ry[z];
                    let excess = dxy - via;
                    if excess > worst.0 {
                        worst = (excess, y, z);
                    }
                    if via <= dxy + geo_tol {
                        atomic = false;
                    }
                }
                if atomic {
                    steps.push(y);
                }
            }
            (worst, steps)
        })
        .collect();

    let mut worst = (0.0f64, 0, 0, 0);
    for (x, ((excess, y, z), _)) in rows.iter().enumerate() {
        if *excess > worst.0 {
            worst = (*excess, x, *y, *z);
        }
    }
    if worst.0 > slack {
        return Err(Error::TriangleViolation {
            x: worst.1,
            y: worst.2,
            z: worst.3,
            excess: worst.0,
        });
    }

    let rank = id_ranks(&points);
    let mut steps: Vec<Vec<usize>> = rows.into_iter().map(|(_, s)| s).collect();
    sort_steps(&mut steps, &rank);
    Ok(MetricMeasureSpace {
        ids: points,
        index,
        dist: flat,
        weights,
        geo_tol,
        mode: InputMode::Matrix,
        edges: Vec::new(),
        steps,
        rank,
    })
}

/// Build a space from a weighted undirected graph; distances are completed
/// by all-pairs shortest paths. Unreachable pairs get infinite distance.
pub fn build_space_from_graph(
    points: Vec<String>,
    edges: Vec<Edge>,
    weights: Vec<f64>,
    geo_tol: f64,
) -> Result<MetricMeasureSpace> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Shape("no points".into()));
    }
    if !(geo_tol >= 0.0 && geo_tol.is_finite()) {
        return Err(Error::InvalidEntry(format!("geo_tol {geo_tol}")));
    }
    let index = build_index(&points)?;
    check_weights(&weights, n)?;

    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in &edges {
        if e.a >= n || e.b >= n {
            return Err(Error::Shape(format!("edge ({},{}) out of range", e.a, e.b)));
        }
        if !(e.length.is_finite() && e.length > 0.0) {
            return Err(Error::InvalidEntry(format!(
                "edge ({},{}) has length {}",
                e.a, e.b, e.length
            )));
        }
        if e.a == e.b {
            continue;
        }
        adj[e.a].push((e.b, e.length));
        adj[e.b].push((e.a, e.length));
    }

    let dist: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|s| dijkstra(&adj, s))
        .collect();

    let rank = id_ranks(&points);
    let mut steps: Vec<Vec<usize>> = (0..n)
        .map(|x| {
            adj[x]
                .iter()
                .filter(|&&(y, w)| w <= dist[x * n + y] + geo_tol)
                .map(|&(y, _)| y)
                .collect()
        })
        .collect();
    sort_steps(&mut steps, &rank);

    Ok(MetricMeasureSpace {
        ids: points,
        index,
        dist,
        weights,
        geo_tol,
        mode: InputMode::Graph,
        edges,
        steps,
        rank,
    })
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    use std::cmp::Ordering;
    use std::collections::BinaryHeap;

    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> Ordering {
            other
                .0
                .total_cmp(&self.0)
                .then_with(|| other.1.cmp(&self.1))
        }
    }

    let mut dist = vec![f64::INFINITY; adj.len()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Item(0.0, source));
    while let Some(Item(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Item(nd, v));
            }
        }
    }
    dist
}

/// A probability measure on the points of a space, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMeasure {
    mass: Vec<f64>,
}

/// Allowed deviation of the total mass from one.
pub const MASS_TOL: f64 = 1e-9;

impl ProbabilityMeasure {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if let Some((i, m)) = mass
            .iter()
            .enumerate()
            .find(|(_, m)| !m.is_finite() || **m < 0.0)
        {
            return Err(Error::InvalidMeasure(format!("mass {m} at point {i}")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("total mass {total}")));
        }
        Ok(Self { mass })
    }

    /// Normalise arbitrary nonnegative masses to total one.
    pub fn normalized(mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidMeasure(format!("total mass {total}")));
        }
        Self::new(mass.into_iter().map(|m| m / total).collect())
    }

    pub fn dirac(n: usize, x: usize) -> Self {
        let mut mass = vec![0.0; n];
        mass[x] = 1.0;
        Self { mass }
    }

    /// Uniform measure on the listed points.
    pub fn uniform_on(n: usize, support: &[usize]) -> Result<Self> {
        let mut mass = vec![0.0; n];
        for &x in support {
            if x >= n {
                return Err(Error::InvalidMeasure(format!("point {x} out of range")));
            }
            mass[x] += 1.0;
        }
        Self::normalized(mass)
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.mass.len())
            .filter(|&i| self.mass[i] > 0.0)
            .collect()
    }

    pub fn check_on(&self, space: &MetricMeasureSpace) -> Result<()> {
        if self.mass.len() != space.len() {
            return Err(Error::InvalidMeasure(format!(
                "measure on {} points, space has {}",
                self.mass.len(),
                space.len()
            )));
        }
        Ok(())
    }
}

/// A subset of the points of a space, stored as a membership mask.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PointSet {
    mask: Vec<bool>,
}

impl PointSet {
    pub fn empty(n: usize) -> Self {
        Self {
            mask: vec![false; n],
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            mask: vec![true; n],
        }
    }

    pub fn from_indices(n: usize, members: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(n);
        for x in members {
            s.insert(x);
        }
        s
    }

    #[inline]
    pub fn contains(&self, x: usize) -> bool {
        self.mask.get(x).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, x: usize) {
        self.mask[x] = true;
    }

    pub fn remove(&mut self, x: usize) {
        self.mask[x] = false;
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn union(&self, other: &PointSet) -> PointSet {
        PointSet {
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| a || b)
                .collect(),
        }
    }

    pub fn difference(&self, other: &PointSet) -> PointSet {
        PointSet {
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| a && !b)
                .collect(),
        }
    }

    /// Total of `values` over the members.
    pub fn sum_of(&self, values: &[f64]) -> f64 {
        self.iter().map(|x| values[x]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn two_points_is_valid() {
        let s = build_space(
            ids(2),
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![1.0, 1.0],
            1e-9,
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dist(0, 1), 1.0);
        assert_eq!(s.steps(0), &[1]);
    }

    #[test]
    fn triangle_violation_reports_triple() {
        let d = vec![
            vec![0.0, 1.0, 3.0],
            vec![1.0, 0.0, 1.0],
            vec![3.0, 1.0, 0.0],
        ];
        match build_space(ids(3), d, vec![1.0; 3], 1e-9) {
            Err(Error::TriangleViolation { x, y, z, excess }) => {
                assert_eq!((x.min(y), x.max(y), z), (0, 2, 1));
                assert!((excess - 1.0).abs() < 1e-12);
            }
            other => panic!("expected triangle violation, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_and_zero_measure_rejected() {
        let d = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(matches!(
            build_space(ids(2), d, vec![1.0; 2], 1e-9),
            Err(Error::AsymmetricDistance { .. })
        ));
        let d = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(
            build_space(ids(2), d, vec![0.0; 2], 1e-9).unwrap_err(),
            Error::ZeroMeasure
        );
    }

    #[test]
    fn coincident_points_rejected() {
        let d = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert!(matches!(
            build_space(ids(2), d, vec![1.0; 2], 1e-9),
            Err(Error::CoincidentPoints { .. })
        ));
    }

    #[test]
    fn path_graph_completes_to_line_metric() {
        let n = 100;
        let edges = (0..n - 1)
            .map(|i| Edge {
                a: i,
                b: i + 1,
                length: 1.0,
            })
            .collect();
        let s = build_space_from_graph(ids(n), edges, vec![1.0; n], 1e-9).unwrap();
        // Floyd-Warshall as an independent all-pairs oracle.
        let mut fw = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in fw.iter_mut().enumerate() {
            row[i] = 0.0;
            if i + 1 < n {
                row[i + 1] = 1.0;
            }
            if i > 0 {
                row[i - 1] = 1.0;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = fw[i][k] + fw[k][j];
                    if via < fw[i][j] {
                        fw[i][j] = via;
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                assert_eq!(s.dist(i, j), fw[i][j]);
                assert_eq!(s.dist(i, j), (i as f64 - j as f64).abs());
            }
        }
    }

    #[test]
    fn disconnected_graph_has_infinite_distance() {
        let edges = vec![Edge {
            a: 0,
            b: 1,
            length: 1.0,
        }];
        let s = build_space_from_graph(ids(3), edges, vec![1.0; 3], 1e-9).unwrap();
        assert!(s.dist(0, 2).is_infinite());
        assert_eq!(s.components(), vec![0, 0, 1]);
    }

    #[test]
    fn probability_measure_validation() {
        assert!(ProbabilityMeasure::new(vec![0.5, 0.4]).is_err());
        assert!(ProbabilityMeasure::new(vec![1.5, -0.5]).is_err());
        let m = ProbabilityMeasure::uniform_on(4, &[0, 1]).unwrap();
        assert_eq!(m.mass(), &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(m.support(), vec![0, 1]);
    }
}
