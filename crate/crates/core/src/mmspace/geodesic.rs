use crate::error::{Error, Result};

use super::MetricMeasureSpace;

/// A discrete constant-speed geodesic: nodes with normalised arc-length
/// parameters in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGeodesic {
    pub nodes: Vec<usize>,
    pub params: Vec<f64>,
    pub length: f64,
}

/// Shortest path from `x` to `y` through the geodesic step graph.
///
/// The walk is greedy in id order: from the current node it takes the
/// smallest neighbour that still lies on a geodesic to `y`, which yields the
/// lexicographically smallest node sequence among shortest paths.
pub fn shortest_path(space: &MetricMeasureSpace, x: usize, y: usize) -> Result<DiscreteGeodesic> {
    let n = space.len();
    if x >= n || y >= n {
        return Err(Error::UnknownPoint(format!("index {}", x.max(y))));
    }
    let total = space.dist(x, y);
    if !total.is_finite() {
        return Err(Error::Disconnected { x, y });
    }
    if x == y {
        return Ok(DiscreteGeodesic {
            nodes: vec![x],
            params: vec![0.0],
            length: 0.0,
        });
    }
    let tol = space.geo_tol();
    let mut nodes = vec![x];
    let mut acc = vec![0.0];
    let mut u = x;
    let mut walked = 0.0;
    while u != y {
        let v = space
            .steps(u)
            .iter()
            .copied()
            .find(|&v| {
                walked + space.dist(u, v) + space.dist(v, y) <= total + tol && !nodes.contains(&v)
            })
            .unwrap_or(y);
        walked += space.dist(u, v);
        nodes.push(v);
        acc.push(walked);
        u = v;
    }
    let length = walked;
    let params = acc
        .iter()
        .map(|a| {
            if length > 0.0 {
                (a / length).min(1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(DiscreteGeodesic {
        nodes,
        params,
        length,
    })
}
