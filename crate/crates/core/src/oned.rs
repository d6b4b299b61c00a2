//! One-dimensional transport by monotone rearrangement.

/// Masses below this are dropped when sweeping.
const SWEEP_EPS: f64 = 1e-15;

/// A point mass on the line. `label` tells apart atoms that share a
/// position and is carried through to the coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub t: f64,
    pub mass: f64,
    pub label: usize,
}

/// Sort atoms by `(t, label)`, merge duplicates and drop empty ones.
pub fn canonical(atoms: &[Atom]) -> Vec<Atom> {
    let mut v: Vec<Atom> = atoms.iter().copied().filter(|a| a.mass > 0.0).collect();
    v.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.label.cmp(&b.label)));
    let mut out: Vec<Atom> = Vec::with_capacity(v.len());
    for a in v {
        match out.last_mut() {
            Some(last) if last.t == a.t && last.label == a.label => last.mass += a.mass,
            _ => out.push(a),
        }
    }
    out
}

/// Left-continuous distribution function: mass strictly below `s`.
pub fn cdf(atoms: &[Atom], s: f64) -> f64 {
    atoms.iter().filter(|a| a.t < s).map(|a| a.mass).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling1D {
    /// `(source atom, target atom, mass)` in sweep order.
    pub pairs: Vec<(Atom, Atom, f64)>,
    /// Target of each source atom when none of them is split.
    pub map_form: Option<Vec<(Atom, Atom)>>,
    /// Source mass that had to be split across several targets.
    pub split_mass: f64,
}

/// Quantile coupling: sweep both measures in increasing order and match
/// mass greedily.
pub fn monotone_rearrangement(mu0: &[Atom], mu1: &[Atom]) -> Coupling1D {
    let src = canonical(mu0);
    let dst = canonical(mu1);
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut left0 = src.first().map_or(0.0, |a| a.mass);
    let mut left1 = dst.first().map_or(0.0, |a| a.mass);
    while i < src.len() && j < dst.len() {
        let m = left0.min(left1);
        if m > 0.0 {
            pairs.push((src[i], dst[j], m));
        }
        left0 -= m;
        left1 -= m;
        if left0 <= SWEEP_EPS * src[i].mass.max(1.0) {
            i += 1;
            left0 = src.get(i).map_or(0.0, |a| a.mass);
        }
        if left1 <= SWEEP_EPS * dst[j].mass.max(1.0) {
            j += 1;
            left1 = dst.get(j).map_or(0.0, |a| a.mass);
        }
    }
    // A leftover crumb from rounding goes to the last target.
    if i < src.len() {
        if let (Some(last), true) = (dst.last(), left0 > 0.0) {
            pairs.push((src[i], *last, left0));
        }
    }

    let mut split_mass = 0.0;
    let mut map = Vec::with_capacity(src.len());
    let mut k = 0;
    while k < pairs.len() {
        let mut e = k + 1;
        while e < pairs.len() && pairs[e].0 == pairs[k].0 {
            e += 1;
        }
        if e - k > 1 {
            split_mass += pairs[k].0.mass;
        } else {
            map.push((pairs[k].0, pairs[k].1));
        }
        k = e;
    }
    Coupling1D {
        map_form: (split_mass == 0.0).then_some(map),
        pairs,
        split_mass,
    }
}

pub fn cost_1d(coupling: &Coupling1D) -> f64 {
    coupling
        .pairs
        .iter()
        .map(|(a, b, m)| m * (b.t - a.t).abs())
        .sum()
}

/// `∫ |H − F|` over the real line for two measures of equal mass; equal to
/// the optimal transport cost in one dimension.
pub fn cdf_gap_integral(mu0: &[Atom], mu1: &[Atom]) -> f64 {
    let mut pts: Vec<f64> = mu0.iter().chain(mu1).map(|a| a.t).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (cdf(mu0, mid) - cdf(mu1, mid)).abs() * (w[1] - w[0])
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn atoms(v: &[(f64, f64)]) -> Vec<Atom> {
        v.iter()
            .enumerate()
            .map(|(i, &(t, mass))| Atom { t, mass, label: i })
            .collect()
    }

    #[test]
    fn cdf_is_left_continuous() {
        let d = atoms(&[(0.0, 1.0)]);
        assert_eq!(cdf(&d, 0.0), 0.0);
        assert_eq!(cdf(&d, 1e-300), 1.0);
        assert_eq!(cdf(&atoms(&[(0.0, 0.5), (1.0, 0.5)]), 1.0), 0.5);
        let a = atoms(&[(-1.0, 0.1), (0.0, 0.2), (1.0, 0.3), (2.0, 0.4)]);
        assert!((cdf(&a, 1.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn identity_and_shift() {
        let a = atoms(&[(0.0, 0.5), (1.0, 0.5)]);
        let c = monotone_rearrangement(&a, &a);
        assert_eq!(cost_1d(&c), 0.0);
        assert!(c.map_form.is_some());

        let b = atoms(&[(2.0, 0.5), (3.0, 0.5)]);
        let c = monotone_rearrangement(&a, &b);
        assert_eq!(cost_1d(&c), 2.0);
        let map = c.map_form.unwrap();
        assert_eq!((map[0].0.t, map[0].1.t), (0.0, 2.0));
        assert_eq!((map[1].0.t, map[1].1.t), (1.0, 3.0));
    }

    #[test]
    fn forced_split() {
        let c = monotone_rearrangement(&atoms(&[(0.0, 1.0)]), &atoms(&[(1.0, 0.5), (2.0, 0.5)]));
        assert!(c.map_form.is_none());
        assert_eq!(c.split_mass, 1.0);
        assert_eq!(cost_1d(&c), 1.5);
    }

    fn measure() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-5i32..5, 1u32..10), 1..6).prop_map(|v| {
            let total: u32 = v.iter().map(|p| p.1).sum();
            v.into_iter()
                .map(|(t, m)| (t as f64, m as f64 / total as f64))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn support_is_monotone(a in measure(), b in measure()) {
            let c = monotone_rearrangement(&atoms(&a), &atoms(&b));
            for w in c.pairs.windows(2) {
                prop_assert!(w[0].0.t <= w[1].0.t);
                prop_assert!(w[0].1.t <= w[1].1.t);
            }
        }

        #[test]
        fn marginals_match(a in measure(), b in measure()) {
            let (ma, mb) = (atoms(&a), atoms(&b));
            let c = monotone_rearrangement(&ma, &mb);
            for (src, want) in [(true, &ma), (false, &mb)] {
                for atom in want.iter() {
                    let got: f64 = c.pairs.iter()
                        .filter(|p| if src { p.0.label == atom.label } else { p.1.label == atom.label })
                        .map(|p| p.2)
                        .sum();
                    prop_assert!((got - atom.mass).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn cost_is_cdf_gap(a in measure(), b in measure()) {
            let (ma, mb) = (atoms(&a), atoms(&b));
            let c = monotone_rearrangement(&ma, &mb);
            prop_assert!((cost_1d(&c) - cdf_gap_integral(&ma, &mb)).abs() < 1e-12);
        }

        #[test]
        fn input_order_does_not_matter(a in measure(), b in measure(), seed in any::<u64>()) {
            let (ma, mb) = (atoms(&a), atoms(&b));
            let mut pa = ma.clone();
            let mut pb = mb.clone();
            let k = (seed as usize) % pa.len().max(1);
            pa.rotate_left(k);
            pb.reverse();
            prop_assert_eq!(monotone_rearrangement(&ma, &mb), monotone_rearrangement(&pa, &pb));
        }

        #[test]
        fn translation_costs_shift(a in measure(), shift in 0i32..7) {
            let ma = atoms(&a);
            let mb: Vec<Atom> = ma.iter().map(|x| Atom { t: x.t + shift as f64, ..*x }).collect();
            let c = monotone_rearrangement(&ma, &mb);
            prop_assert!((cost_1d(&c) - shift as f64).abs() < 1e-12);
        }
    }
}
