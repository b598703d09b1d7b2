//! Symmetric coefficient tables and norms of the associated multilinear forms.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ChaosObservable, SignedIndex, WickMonomial};
use crate::model::CovarianceModel;
use crate::tolerances::{POWER_ITERS, POWER_STARTS};
use crate::util::factorial;

const POWER_SEED: u64 = 0x5eed_0f_b0;

/// Symmetric table of one degree, stored once per sorted tuple.
///
/// Every ordered tuple that sorts to the key carries the same value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SymTable {
    pub degree: usize,
    entries: BTreeMap<WickMonomial, f64>,
}

impl SymTable {
    /// Value at an ordered tuple.
    pub fn get(&self, ordered: &[SignedIndex]) -> f64 {
        let key = WickMonomial::new(ordered.to_vec());
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&WickMonomial, f64)> {
        self.entries.iter().map(|(m, &v)| (m, v))
    }

    /// `sqrt(sum over ordered tuples of alpha^2)`.
    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|(m, v)| m.ordered_copies() * v * v).sum::<f64>().sqrt()
    }

    /// Distinct indices appearing in the table, sorted.
    pub fn support(&self) -> Vec<SignedIndex> {
        let mut s: Vec<SignedIndex> = self.entries.keys().flat_map(|m| m.indices().iter().copied()).collect();
        s.sort();
        s.dedup();
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SymmetricCoefficients {
    pub tables: BTreeMap<usize, SymTable>,
}

impl SymmetricCoefficients {
    pub fn table(&self, k: usize) -> Option<&SymTable> {
        self.tables.get(&k)
    }

    /// Recover the sorted-index coefficients `a = (k! / prod l!) alpha`.
    pub fn desymmetrize(&self, degree0: f64) -> ChaosObservable {
        let mut f = ChaosObservable::constant(degree0);
        for t in self.tables.values() {
            for (m, v) in t.entries() {
                f.add_term(m.clone(), v * m.ordered_copies());
            }
        }
        f
    }
}

/// `alpha = (prod l! / k!) a` for every term.
pub fn symmetrize(f: &ChaosObservable) -> SymmetricCoefficients {
    let mut tables: BTreeMap<usize, SymTable> = BTreeMap::new();
    for (m, a) in f.terms() {
        let t = tables.entry(m.degree()).or_insert_with(|| SymTable { degree: m.degree(), ..Default::default() });
        t.entries.insert(m.clone(), a / m.ordered_copies());
    }
    SymmetricCoefficients { tables }
}

/// Bracket on the operator norm of the symmetric form `B_{f_k}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultilinearNorm {
    pub lower: f64,
    pub upper: f64,
    pub frobenius: f64,
}

/// Norm bracket of the degree-`k` form; exact for `k <= 2`, otherwise
/// power iteration below and the Frobenius norm above.
pub fn multilinear_norm(sym: &SymmetricCoefficients, k: usize) -> MultilinearNorm {
    let Some(t) = sym.table(k) else {
        return MultilinearNorm { lower: 0.0, upper: 0.0, frobenius: 0.0 };
    };
    let frob = t.frobenius();
    let support = t.support();
    let pos: BTreeMap<SignedIndex, usize> = support.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let d = support.len();
    match k {
        0 => MultilinearNorm { lower: frob, upper: frob, frobenius: frob },
        1 => MultilinearNorm { lower: frob, upper: frob, frobenius: frob },
        2 => {
            let mut m = DMatrix::<f64>::zeros(d, d);
            for (mono, v) in t.entries() {
                let (i, j) = (pos[&mono.indices()[0]], pos[&mono.indices()[1]]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            let spec = m.symmetric_eigenvalues().iter().fold(0.0f64, |a, e| a.max(e.abs()));
            MultilinearNorm { lower: spec, upper: spec, frobenius: frob }
        }
        _ => {
            // entries as (positions with multiplicity, ordered copies * alpha)
            let poly: Vec<(Vec<(usize, i32)>, f64)> = t
                .entries()
                .map(|(mono, v)| {
                    let g = mono.groups().iter().map(|&(i, m)| (pos[&i], m as i32)).collect();
                    (g, v * mono.ordered_copies())
                })
                .collect();
            let lower = power_iteration(&poly, d, k).min(frob);
            MultilinearNorm { lower, upper: frob, frobenius: frob }
        }
    }
}

/// Best `|B(x, ..., x)|` over unit `x` found by symmetric power iteration.
fn power_iteration(poly: &[(Vec<(usize, i32)>, f64)], d: usize, k: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut best = 0.0f64;
    for _ in 0..POWER_STARTS {
        let mut x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        normalize(&mut x);
        let mut last = f64::NAN;
        for _ in 0..POWER_ITERS {
            // gradient of p(x) = B(x, ..., x); B(., x, ..., x) = grad / k
            let mut g = vec![0.0; d];
            let mut val = 0.0;
            for (groups, c) in poly {
                let mono: f64 = groups.iter().map(|&(i, m)| x[i].powi(m)).product();
                val += c * mono;
                for &(i, m) in groups {
                    let rest: f64 = groups
                        .iter()
                        .map(|&(j, mj)| if j == i { x[j].powi(mj - 1) } else { x[j].powi(mj) })
                        .product();
                    g[i] += c * m as f64 * rest / k as f64;
                }
            }
            best = best.max(val.abs());
            if !(normalize(&mut g) > 0.0) || (val.abs() - last).abs() <= 1e-15 * val.abs() {
                break;
            }
            last = val.abs();
            let s = if val < 0.0 { -1.0 } else { 1.0 };
            x = g.iter().map(|v| s * v).collect();
        }
    }
    best
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        for v in x.iter_mut() {
            *v /= n;
        }
    }
    n
}

/// `(||f||^2 + sum_{k >= 1} ||B_{f_k}||^2)^{1/2}` with upper norm estimates.
pub fn x_norm(f: &ChaosObservable, cov: &CovarianceModel) -> f64 {
    let sym = symmetrize(f);
    let s: f64 = sym.tables.keys().map(|&k| multilinear_norm(&sym, k).upper.powi(2)).sum();
    (f.l2_norm_sq(cov) + s).sqrt()
}

/// `||f|| + sup_{k >= 1} k! ||B_{f_k}||` with upper norm estimates.
pub fn y_norm(f: &ChaosObservable, cov: &CovarianceModel) -> f64 {
    let sym = symmetrize(f);
    let s = sym
        .tables
        .keys()
        .map(|&k| factorial(k) * multilinear_norm(&sym, k).upper)
        .fold(0.0, f64::max);
    f.l2_norm_sq(cov).sqrt() + s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn mono(l: &[i32]) -> WickMonomial {
        WickMonomial::from_labels(l).unwrap()
    }

    fn idx(l: i32) -> SignedIndex {
        SignedIndex::new(l).unwrap()
    }

    #[test]
    fn symmetrize_examples() {
        let f = ChaosObservable::default().with_term(mono(&[1, 2]), 6.0);
        let s = symmetrize(&f);
        assert_eq!(s.table(2).unwrap().get(&[idx(1), idx(2)]), 3.0);
        assert_eq!(s.table(2).unwrap().get(&[idx(2), idx(1)]), 3.0);
        let f = ChaosObservable::default().with_term(mono(&[1, 1]), 5.0);
        assert_eq!(symmetrize(&f).table(2).unwrap().get(&[idx(1), idx(1)]), 5.0);
        let f = ChaosObservable::default().with_term(mono(&[1, 1, 2]), 12.0);
        let t = symmetrize(&f);
        let t = t.table(3).unwrap();
        for order in [[1, 1, 2], [1, 2, 1], [2, 1, 1]] {
            assert_eq!(t.get(&order.map(idx)), 4.0);
        }
        assert_eq!(t.get(&[idx(1), idx(2), idx(2)]), 0.0);
    }

    #[test]
    fn norm_examples() {
        let f = ChaosObservable::default().with_term(mono(&[1]), 3.0).with_term(mono(&[-2]), 4.0);
        let n = multilinear_norm(&symmetrize(&f), 1);
        assert_eq!((n.lower, n.upper), (5.0, 5.0));

        let d = 6;
        let mut f = ChaosObservable::default();
        for i in 1..=d {
            f.add_term(mono(&[i, i]), 1.0);
        }
        let n = multilinear_norm(&symmetrize(&f), 2);
        assert_abs_diff_eq!(n.lower, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.upper, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.frobenius, (d as f64).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rank_one_cubic_form() {
        // alpha_{ijk} = v_i v_j v_k, so a = copies * alpha on sorted tuples
        let v = [(1, 0.5), (-2, -1.0), (3, 2.0)];
        let mut f = ChaosObservable::default();
        for a in 0..3 {
            for b in a..3 {
                for c in b..3 {
                    let m = mono(&[v[a].0, v[b].0, v[c].0]);
                    let alpha = v[a].1 * v[b].1 * v[c].1;
                    f.add_term(m.clone(), alpha * m.ordered_copies());
                }
            }
        }
        let norm: f64 = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        let n = multilinear_norm(&symmetrize(&f), 3);
        assert_abs_diff_eq!(n.lower, norm.powi(3), epsilon = 1e-6);
        assert_abs_diff_eq!(n.upper, norm.powi(3), epsilon = 1e-6);
    }

    #[test]
    fn x_and_y_norms() {
        let cov = CovarianceModel::new(vec![0.7, 0.5]).unwrap();
        let c = ChaosObservable::constant(-2.5);
        assert_eq!(x_norm(&c, &cov), 2.5);
        assert_eq!(y_norm(&c, &cov), 2.5);
        let f = ChaosObservable::default().with_term(mono(&[1]), 3.0).with_term(mono(&[-2]), 4.0);
        let l2 = f.l2_norm_sq(&cov);
        assert_abs_diff_eq!(x_norm(&f, &cov), (l2 + 25.0).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(y_norm(&f, &cov), l2.sqrt() + 5.0, epsilon = 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn roundtrip_is_exact(terms in prop::collection::vec((prop::collection::vec(prop::sample::select(vec![1, -1, 2, 3, -4]), 1..5), -5.0f64..5.0), 1..8)) {
            let mut f = ChaosObservable::constant(0.3);
            for (l, c) in &terms {
                f.add_term(mono(l), *c);
            }
            let back = symmetrize(&f).desymmetrize(0.3);
            for (m, a) in f.terms() {
                let b = back.coeff(m);
                prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            }
        }

        #[test]
        fn lower_never_exceeds_upper(terms in prop::collection::vec((prop::collection::vec(prop::sample::select(vec![1, -1, 2, 3]), 3..=3), -5.0f64..5.0), 1..6)) {
            let mut f = ChaosObservable::default();
            for (l, c) in &terms {
                f.add_term(mono(l), *c);
            }
            let n = multilinear_norm(&symmetrize(&f), 3);
            prop_assert!(n.lower <= n.upper * (1.0 + 1e-12));
            prop_assert!(n.lower >= 0.0);
        }

        #[test]
        fn spectral_norm_below_frobenius(terms in prop::collection::vec((prop::collection::vec(prop::sample::select(vec![1, -1, 2, 3, -3]), 2..=2), -5.0f64..5.0), 1..8)) {
            let mut f = ChaosObservable::default();
            for (l, c) in &terms {
                f.add_term(mono(l), *c);
            }
            let n = multilinear_norm(&symmetrize(&f), 2);
            prop_assert!(n.upper <= n.frobenius * (1.0 + 1e-12));
        }
    }
}
