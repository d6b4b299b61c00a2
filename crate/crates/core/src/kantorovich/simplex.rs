//! Primal network simplex for the uncapacitated transportation problem.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Flows below this are treated as exact zeros.
const FLOW_SNAP: f64 = 1e-15;

struct Arc {
    from: usize,
    to: usize,
    cost: f64,
}

struct Tree {
    parent: Vec<usize>,
    pred: Vec<usize>,
    up: Vec<bool>,
    depth: Vec<usize>,
    pot: Vec<f64>,
}

/// Minimum-cost transport from `supply` to `demand` with arc costs
/// `cost(i, j)`; infinite costs mean the arc is absent.
///
/// Returns `(i, j, flow)` for every source/sink pair carrying positive flow.
/// Uses a strongly feasible spanning tree rooted at an artificial node, so
/// degenerate pivots cannot cycle.
pub(crate) fn transport_simplex(
    supply: &[f64],
    demand: &[f64],
    cost: &dyn Fn(usize, usize) -> f64,
) -> Result<Vec<(usize, usize, f64)>> {
    let m = supply.len();
    let k = demand.len();
    let root = m + k;
    let nodes = m + k + 1;

    let mut arcs = Vec::with_capacity(m * k + m + k);
    let mut max_cost = 0.0f64;
    for i in 0..m {
        for j in 0..k {
            let c = cost(i, j);
            if c.is_finite() {
                max_cost = max_cost.max(c.abs());
                arcs.push(Arc {
                    from: i,
                    to: m + j,
                    cost: c,
                });
            }
        }
    }
    let real = arcs.len();
    let big = (max_cost + 1.0) * nodes as f64;
    let mut flow = vec![0.0; real + m + k];
    let mut tree_arcs = Vec::with_capacity(m + k);
    for (i, &s) in supply.iter().enumerate() {
        flow[arcs.len()] = s;
        tree_arcs.push(arcs.len());
        arcs.push(Arc {
            from: i,
            to: root,
            cost: big,
        });
    }
    for (j, &d) in demand.iter().enumerate() {
        flow[arcs.len()] = d;
        tree_arcs.push(arcs.len());
        arcs.push(Arc {
            from: root,
            to: m + j,
            cost: big,
        });
    }
    let mut in_tree = vec![false; arcs.len()];
    for &a in &tree_arcs {
        in_tree[a] = true;
    }

    let eps = 1e-11 * (1.0 + max_cost);
    let block = ((real as f64).sqrt() as usize).max(16).min(real.max(1));
    let max_iter = 100 * arcs.len() + 10_000;
    let mut next_arc = 0usize;
    let mut tree = rebuild(&arcs, &tree_arcs, nodes, root);

    for _ in 0..max_iter {
        // Block search pricing over the real arcs.
        let mut entering = None;
        let mut best = -eps;
        let mut scanned = 0;
        let mut in_block = 0;
        while scanned < real {
            let a = next_arc;
            next_arc += 1;
            if next_arc == real {
                next_arc = 0;
            }
            scanned += 1;
            in_block += 1;
            if !in_tree[a] {
                let arc = &arcs[a];
                let rc = arc.cost + tree.pot[arc.from] - tree.pot[arc.to];
                if rc < best {
                    best = rc;
                    entering = Some(a);
                }
            }
            if in_block == block {
                if entering.is_some() {
                    break;
                }
                in_block = 0;
            }
        }
        let Some(e) = entering else {
            return finish(&arcs, &flow, real, m, supply, demand);
        };

        let (u, v) = (arcs[e].from, arcs[e].to);
        let join = {
            let (mut a, mut b) = (u, v);
            while a != b {
                if tree.depth[a] >= tree.depth[b] {
                    a = tree.parent[a];
                } else {
                    b = tree.parent[b];
                }
            }
            a
        };
        let mut delta = f64::INFINITY;
        let mut out = None;
        let mut w = u;
        while w != join {
            if tree.up[w] && flow[tree.pred[w]] < delta {
                delta = flow[tree.pred[w]];
                out = Some(w);
            }
            w = tree.parent[w];
        }
        let mut w = v;
        while w != join {
            if !tree.up[w] && flow[tree.pred[w]] <= delta {
                delta = flow[tree.pred[w]];
                out = Some(w);
            }
            w = tree.parent[w];
        }
        let Some(out) = out else {
            return Err(Error::NumericFailure("unbounded transport cycle".into()));
        };

        flow[e] += delta;
        let mut w = u;
        while w != join {
            let a = tree.pred[w];
            flow[a] += if tree.up[w] { -delta } else { delta };
            if flow[a].abs() < FLOW_SNAP {
                flow[a] = 0.0;
            }
            w = tree.parent[w];
        }
        let mut w = v;
        while w != join {
            let a = tree.pred[w];
            flow[a] += if tree.up[w] { delta } else { -delta };
            if flow[a].abs() < FLOW_SNAP {
                flow[a] = 0.0;
            }
            w = tree.parent[w];
        }
        let leaving = tree.pred[out];
        flow[leaving] = 0.0;
        in_tree[leaving] = false;
        in_tree[e] = true;
        let slot = tree_arcs
            .iter()
            .position(|&a| a == leaving)
            .expect("tree arc");
        tree_arcs[slot] = e;
        tree = rebuild(&arcs, &tree_arcs, nodes, root);
    }
    Err(Error::NumericFailure(format!(
        "network simplex exceeded {max_iter} pivots"
    )))
}

fn rebuild(arcs: &[Arc], tree_arcs: &[usize], nodes: usize, root: usize) -> Tree {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for &a in tree_arcs {
        adj[arcs[a].from].push(a);
        adj[arcs[a].to].push(a);
    }
    let mut tree = Tree {
        parent: vec![usize::MAX; nodes],
        pred: vec![usize::MAX; nodes],
        up: vec![false; nodes],
        depth: vec![0; nodes],
        pot: vec![0.0; nodes],
    };
    tree.parent[root] = root;
    let mut queue = VecDeque::from([root]);
    while let Some(p) = queue.pop_front() {
        for &a in &adj[p] {
            let arc = &arcs[a];
            let (c, up) = if arc.from == p {
                (arc.to, false)
            } else {
                (arc.from, true)
            };
            if tree.parent[c] != usize::MAX {
                continue;
            }
            tree.parent[c] = p;
            tree.pred[c] = a;
            tree.up[c] = up;
            tree.depth[c] = tree.depth[p] + 1;
            tree.pot[c] = if up {
                tree.pot[p] - arc.cost
            } else {
                tree.pot[p] + arc.cost
            };
            queue.push_back(c);
        }
    }
    tree
}

fn finish(
    arcs: &[Arc],
    flow: &[f64],
    real: usize,
    m: usize,
    supply: &[f64],
    demand: &[f64],
) -> Result<Vec<(usize, usize, f64)>> {
    let stuck: f64 = flow[real..].iter().sum::<f64>() / 2.0;
    let total: f64 = supply.iter().sum();
    if stuck > 1e-12 * total.max(1.0) {
        return Err(Error::Infeasible {
            mass0: total,
            mass1: demand.iter().sum::<f64>() - stuck,
        });
    }
    Ok((0..real)
        .filter(|&a| flow[a] > 0.0)
        .map(|a| (arcs[a].from, arcs[a].to - m, flow[a]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let pos0 = [0.0f64, 1.0];
        let pos1 = [2.0, 3.0];
        let cost = |i: usize, j: usize| (pos0[i] - pos1[j]).abs();
        let flows = transport_simplex(&[0.5, 0.5], &[0.5, 0.5], &cost).unwrap();
        let total: f64 = flows.iter().map(|&(i, j, f)| f * cost(i, j)).sum();
        assert!((total - 2.0).abs() < 1e-15);
    }

    #[test]
    fn blocked_arcs_make_infeasible() {
        let cost = |_: usize, _: usize| f64::INFINITY;
        assert!(matches!(
            transport_simplex(&[1.0], &[1.0], &cost),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn degenerate_square_assignment() {
        // Identity costs zero; all other pairs cost one.
        let n = 12;
        let cost = |i: usize, j: usize| if i == j { 0.0 } else { 1.0 };
        let flows =
            transport_simplex(&vec![1.0 / n as f64; n], &vec![1.0 / n as f64; n], &cost).unwrap();
        let total: f64 = flows.iter().map(|&(i, j, f)| f * cost(i, j)).sum();
        assert!(total.abs() < 1e-15);
    }
}
