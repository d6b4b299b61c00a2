use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::mmspace::MetricMeasureSpace;

/// Slack on the cyclical monotonicity inequality.
pub const D_MONOTONE_TOL: f64 = 1e-9;

/// Slack on the potential order certificate.
pub const D2_TOL: f64 = 1e-12;

/// Cycles longer than this are sampled rather than enumerated.
const EXHAUSTIVE_LEN: usize = 3;

const SAMPLES_PER_LEN: usize = 2_000;

const MAX_REPORTED: usize = 1_000;

/// A cycle of pairs `(x_i, y_i)` whose cost drops by `excess` when every
/// `x_i` is sent to `y_{i+1}` instead.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleViolation {
    pub pairs: Vec<(usize, usize)>,
    pub excess: f64,
}

fn excess(space: &MetricMeasureSpace, cycle: &[(usize, usize)]) -> f64 {
    let k = cycle.len();
    let mut own = 0.0;
    let mut shifted = 0.0;
    for i in 0..k {
        own += space.dist(cycle[i].0, cycle[i].1);
        shifted += space.dist(cycle[i].0, cycle[(i + 1) % k].1);
    }
    own - shifted
}

/// Search for cycles violating cyclical monotonicity for cost `dist`.
///
/// Cycles of length up to three are enumerated exhaustively; longer ones up
/// to `max_cycle_len` are sampled with the given seed. At most a thousand
/// violations are returned.
pub fn check_d_monotone(
    space: &MetricMeasureSpace,
    pairs: &[(usize, usize)],
    max_cycle_len: usize,
    seed: u64,
) -> Vec<CycleViolation> {
    let p = pairs.len();
    let mut out: Vec<CycleViolation> = Vec::new();
    let report = |cycle: Vec<(usize, usize)>| -> Option<CycleViolation> {
        let e = excess(space, &cycle);
        (e > D_MONOTONE_TOL).then_some(CycleViolation {
            pairs: cycle,
            excess: e,
        })
    };

    if max_cycle_len >= 2 {
        let found: Vec<CycleViolation> = (0..p)
            .into_par_iter()
            .flat_map_iter(|i| ((i + 1)..p).filter_map(move |j| report(vec![pairs[i], pairs[j]])))
            .collect();
        out.extend(found);
    }
    if max_cycle_len >= 3 && out.len() < MAX_REPORTED {
        let found: Vec<CycleViolation> = (0..p)
            .into_par_iter()
            .flat_map_iter(|i| {
                ((i + 1)..p).flat_map(move |j| {
                    ((j + 1)..p).flat_map(move |k| {
                        [
                            report(vec![pairs[i], pairs[j], pairs[k]]),
                            report(vec![pairs[i], pairs[k], pairs[j]]),
                        ]
                        .into_iter()
                        .flatten()
                    })
                })
            })
            .collect();
        out.extend(found);
    }
    if max_cycle_len > EXHAUSTIVE_LEN {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for len in (EXHAUSTIVE_LEN + 1)..=max_cycle_len.min(p) {
            for _ in 0..SAMPLES_PER_LEN {
                let idx = sample(&mut rng, p, len);
                if let Some(v) = report(idx.iter().map(|i| pairs[i]).collect()) {
                    out.push(v);
                }
            }
        }
    }
    out.truncate(MAX_REPORTED);
    out
}

/// Order certificate for squared-distance monotonicity: true iff every two
/// pairs `(x₀, y₀)`, `(x₁, y₁)` satisfy
/// `(φ(y₁) − φ(y₀)) · (φ(x₁) − φ(x₀)) ≥ −1e-12`.
pub fn check_d2_monotone_order(pairs: &[(usize, usize)], potential: &[f64]) -> bool {
    pairs.par_iter().enumerate().all(|(i, &(x0, y0))| {
        pairs[i + 1..].iter().all(|&(x1, y1)| {
            (potential[y1] - potential[y0]) * (potential[x1] - potential[x0]) >= -D2_TOL
        })
    })
}
