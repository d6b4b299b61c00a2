use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{build_space, build_space_from_graph, Edge, MetricMeasureSpace, EXACT_GEO_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Interval,
    Circle,
    Sphere2Sample,
    EuclideanGrid,
    Tripod,
    BinaryTree,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Interval,
        ModelKind::Circle,
        ModelKind::Sphere2Sample,
        ModelKind::EuclideanGrid,
        ModelKind::Tripod,
        ModelKind::BinaryTree,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Interval => "interval",
            ModelKind::Circle => "circle",
            ModelKind::Sphere2Sample => "sphere2_sample",
            ModelKind::EuclideanGrid => "euclidean_grid",
            ModelKind::Tripod => "tripod",
            ModelKind::BinaryTree => "binary_tree",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Resolution and geometry of a generated model.
///
/// `n` is the resolution: points for interval and circle, points per side
/// for the grid, approximate point count for the sphere, nodes per leg
/// (center included) for the tripod and levels for the binary tree.
/// `size` is the length scale: interval length, circle and sphere radius,
/// grid side, tripod leg length, tree edge length.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub size: f64,
    pub seed: u64,
}

impl ModelParams {
    pub fn with_n(n: usize) -> Self {
        Self {
            n,
            size: 1.0,
            seed: 0,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn size(mut self, size: f64) -> Self {
        self.size = size;
        self
    }
}

/// A generated space together with the embedding coordinates of its points.
///
/// Coordinates: `[x]` on the interval, `[angle]` on the circle,
/// `[colatitude, longitude]` on the sphere, `[x, y]` on the grid, and
/// `[depth]` on trees (distance from the center or root).
#[derive(Debug, Clone)]
pub struct Model {
    pub kind: ModelKind,
    pub space: MetricMeasureSpace,
    pub coords: Vec<Vec<f64>>,
    pub mesh: f64,
}

fn padded_ids(n: usize) -> Vec<String> {
    let w = (n.max(2) - 1).to_string().len();
    (0..n).map(|i| format!("{i:0w$}")).collect()
}

pub fn generate_model(kind: ModelKind, params: &ModelParams) -> Result<Model> {
    if params.n < 2 {
        return Err(Error::BadResolution {
            kind: kind.as_str().to_string(),
            n: params.n,
        });
    }
    if !(params.size > 0.0 && params.size.is_finite()) {
        return Err(Error::InvalidEntry(format!("model size {}", params.size)));
    }
    let (space, coords) = match kind {
        ModelKind::Interval => interval(params)?,
        ModelKind::Circle => circle(params)?,
        ModelKind::Sphere2Sample => sphere(params)?,
        ModelKind::EuclideanGrid => grid(params)?,
        ModelKind::Tripod => tripod(params)?,
        ModelKind::BinaryTree => binary_tree(params)?,
    };
    let mesh = space.mesh();
    Ok(Model {
        kind,
        space,
        coords,
        mesh,
    })
}

/// Trapezoid weights of a uniform partition with `n` nodes and spacing `h`.
fn trapezoid(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h })
        .collect()
}

fn interval(p: &ModelParams) -> Result<(MetricMeasureSpace, Vec<Vec<f64>>)> {
    let n = p.n;
    let h = p.size / (n - 1) as f64;
    let dist = (0..n)
        .map(|i| (0..n).map(|j| i.abs_diff(j) as f64 * h).collect())
        .collect();
    let coords = (0..n).map(|i| vec![i as f64 * h]).collect();
    let space = build_space(padded_ids(n), dist, trapezoid(n, h), EXACT_GEO_TOL)?;
    Ok((space, coords))
}

fn circle(p: &ModelParams) -> Result<(MetricMeasureSpace, Vec<Vec<f64>>)> {
    let n = p.n;
    let step = 2.0 * PI / n as f64;
    let dist = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let k = i.abs_diff(j);
                    k.min(n - k) as f64 * step * p.size
                })
                .collect()
        })
        .collect();
    let coords = (0..n).map(|i| vec![i as f64 * step]).collect();
    let space = build_space(padded_ids(n), dist, vec![step * p.size; n], EXACT_GEO_TOL)?;
    Ok((space, coords))
}

/// Latitude-longitude lattice: both poles, `rings` circles of latitude at
/// equal colatitude steps and `meridians` points per ring, aligned so that
/// every meridian is a sampled geodesic. Weights are exact cell areas.
fn sphere(p: &ModelParams) -> Result<(MetricMeasureSpace, Vec<Vec<f64>>)> {
    let n = p.n.max(4);
    let rings = (((n - 2) as f64 / 2.0).sqrt().round() as usize).max(1);
    let meridians = ((((n - 2) as f64) / rings as f64).round() as usize).max(2);
    let dtheta = PI / (rings + 1) as f64;
    let dlambda = 2.0 * PI / meridians as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let offset = rng.gen_range(0.0..dlambda);
    let r2 = p.size * p.size;

    let mut coords = vec![vec![0.0, 0.0]];
    let mut weights = vec![2.0 * PI * (1.0 - (dtheta / 2.0).cos()) * r2];
    for i in 1..=rings {
        let theta = i as f64 * dtheta;
        let band = (theta - dtheta / 2.0).cos() - (theta + dtheta / 2.0).cos();
        for k in 0..meridians {
            coords.push(vec![theta, offset + k as f64 * dlambda]);
            weights.push(dlambda * band * r2);
        }
    }
    coords.push(vec![PI, 0.0]);
    weights.push(weights[0]);

    let unit: Vec<[f64; 3]> = coords
        .iter()
        .map(|c| {
            let (st, ct) = c[0].sin_cos();
            let (sl, cl) = c[1].sin_cos();
            [st * cl, st * sl, ct]
        })
        .collect();
    let m = unit.len();
    let dist = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    let (a, b) = (unit[i], unit[j]);
                    let cross = [
                        a[1] * b[2] - a[2] * b[1],
                        a[2] * b[0] - a[0] * b[2],
                        a[0] * b[1] - a[1] * b[0],
                    ];
                    let sin =
                        (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
                    let cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
                    sin.atan2(cos) * p.size
                })
                .collect()
        })
        .collect();
    // Symmetrise bit-for-bit.
    let mut dist: Vec<Vec<f64>> = dist;
    for i in 0..m {
        for j in (i + 1)..m {
            dist[j][i] = dist[i][j];
        }
    }
    let space = build_space(padded_ids(m), dist, weights, EXACT_GEO_TOL)?;
    Ok((space, coords))
}

fn grid(p: &ModelParams) -> Result<(MetricMeasureSpace, Vec<Vec<f64>>)> {
    let n = p.n;
    let h = p.size / (n - 1) as f64;
    let tw = trapezoid(n, h);
    let m = n * n;
    let mut coords = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..n {
        for j in 0..n {
            coords.push(vec![i as f64 * h, j as f64 * h]);
            weights.push(tw[i] * tw[j]);
        }
    }
    let dist = (0..m)
        .map(|a| {
            (0..m)
                .map(|b| {
                    let di = (a / n).abs_diff(b / n) as f64;
                    let dj = (a % n).abs_diff(b % n) as f64;
                    di.hypot(dj) * h
                })
                .collect()
        })
        .collect();
    let space = build_space(padded_ids(m), dist, weights, EXACT_GEO_TOL)?;
    Ok((space, coords))
}

/// Three legs of `n - 1` edges each meeting at a center `c`. Leaves are
/// `u`, `v`, `w`; leg interiors are `u1`, `u2`, … counted from the center.
/// With `n = 2` this is the star `u, c, v, w`.
fn tripod(p: &ModelParams) -> Result<(MetricMeasureSpace, Vec<Vec<f64>>)> {
    let per_leg = p.n - 1;
    let edge = p.size / per_leg as f64;
    let leg_name = |leg: &str, k: usize| {
        if k == per_leg {
            leg.to_string()
        } else {
            format!("{leg}{k}")
        }
    };
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    let mut edges = Vec::new();
    // u leg from the leaf inwards, then the center, then v and w outwards.
    for k in (1..=per_leg).rev() {
        ids.push(leg_name("u", k));
        coords.push(vec![k as f64 * edge]);
    }
    let center = ids.len();
    ids.push("c".to_string());
    coords.push(vec![0.0]);
    for k in 0..per_leg {
        edges.push(Edge {
            a: k,
            b: k + 1,
            length: edge,
        });
    }
    for leg in ["v", "w"] {
        let mut prev = center;
        for k in 1..=per_leg {
            let idx = ids.len();
            ids.push(leg_name(leg, k));
            coords.push(vec![k as f64 * edge]);
            edges.push(Edge {
                a: prev,
                b: idx,
                length: edge,
            });
            prev = idx;
        }
    }
    let n = ids.len();
    let space = build_space_from_graph(ids, edges, vec![1.0; n], EXACT_GEO_TOL)?;
    Ok((space, coords))
}

/// Complete binary tree with `n` levels in heap order.
fn binary_tree(p: &ModelParams) -> Result<(MetricMeasureSpace, Vec<Vec<f64>>)> {
    if p.n > 12 {
        return Err(Error::BadResolution {
            kind: ModelKind::BinaryTree.as_str().to_string(),
            n: p.n,
        });
    }
    let m = (1usize << p.n) - 1;
    let edges = (1..m)
        .map(|i| Edge {
            a: (i - 1) / 2,
            b: i,
            length: p.size,
        })
        .collect();
    let coords = (0..m)
        .map(|i| vec![((i + 1) as f64).log2().floor() * p.size])
        .collect();
    let space = build_space_from_graph(padded_ids(m), edges, vec![1.0; m], EXACT_GEO_TOL)?;
    Ok((space, coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmspace::shortest_path;

    #[test]
    fn interval_eleven_points() {
        let m = generate_model(ModelKind::Interval, &ModelParams::with_n(11)).unwrap();
        let s = &m.space;
        assert_eq!(s.len(), 11);
        for i in 0..11 {
            assert!((m.coords[i][0] - i as f64 / 10.0).abs() < 1e-15);
            for j in 0..11 {
                assert!((s.dist(i, j) - (m.coords[i][0] - m.coords[j][0]).abs()).abs() < 1e-15);
            }
        }
        assert!((s.total_weight() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tripod_star() {
        let m = generate_model(ModelKind::Tripod, &ModelParams::with_n(2)).unwrap();
        let s = &m.space;
        assert_eq!(s.ids(), &["u", "c", "v", "w"]);
        let ix = |id: &str| s.index_of(id).unwrap();
        assert_eq!(s.dist(ix("u"), ix("v")), 2.0);
        assert_eq!(s.dist(ix("c"), ix("w")), 1.0);

        let m = generate_model(ModelKind::Tripod, &ModelParams::with_n(3)).unwrap();
        assert_eq!(m.space.len(), 7);
        assert_eq!(m.space.dist(0, 6), 2.0);
    }

    #[test]
    fn sphere_triangle_defect_is_nonnegative() {
        let m =
            generate_model(ModelKind::Sphere2Sample, &ModelParams::with_n(500).seed(7)).unwrap();
        let s = &m.space;
        let n = s.len();
        let mut worst = f64::INFINITY;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let defect = s.dist(x, z) + s.dist(z, y) - s.dist(x, y);
                    worst = worst.min(defect);
                }
            }
        }
        assert!(worst >= -1e-12, "worst defect {worst}");
        assert!((s.total_weight() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn sphere_meridians_are_geodesics() {
        let m = generate_model(ModelKind::Sphere2Sample, &ModelParams::with_n(100)).unwrap();
        let s = &m.space;
        let south = s.len() - 1;
        let g = shortest_path(s, 0, south).unwrap();
        assert!((g.length - PI).abs() < 1e-12);
        assert_eq!(g.nodes.len(), 9);
    }

    #[test]
    fn graph_models_have_exact_paths() {
        for kind in [ModelKind::Tripod, ModelKind::BinaryTree] {
            let m = generate_model(kind, &ModelParams::with_n(4)).unwrap();
            let s = &m.space;
            for x in 0..s.len() {
                for y in 0..s.len() {
                    assert_eq!(shortest_path(s, x, y).unwrap().length, s.dist(x, y));
                }
            }
        }
    }

    #[test]
    fn bad_resolution() {
        for kind in ModelKind::ALL {
            assert!(matches!(
                generate_model(kind, &ModelParams::with_n(1)),
                Err(Error::BadResolution { .. })
            ));
        }
        assert_eq!(
            "torus".parse::<ModelKind>().unwrap_err(),
            Error::UnknownModel("torus".into())
        );
    }
}
