//! Wick calculus over the signed real basis.
//!
//! A signed index `+l` is the direction `e_{l-1}` and `-l` is `i e_{l-1}`,
//! so `Re<e_{+l}, x> = Re x_{l-1}` and `Re<e_{-l}, x> = Im x_{l-1}`. These real
//! coordinates are independent centred normals with variance `sigma_{l-1}^2`.
//! Observables are finite sums of Wick monomials `:Re<e_{j_1}, .> ... Re<e_{j_k}, .>:`
//! with sorted indices.

mod multilinear;
mod permanent;
mod poly;

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{CovarianceModel, OperatorModel, Transfer};
use crate::tolerances::{HERMITE_MAX, PERMANENT_MAX};
use crate::util::factorial;

pub use multilinear::{
    multilinear_norm, symmetrize, x_norm, y_norm, MultilinearNorm, SymTable, SymmetricCoefficients,
};
pub use permanent::{permanent, permanent_naive, permanent_ryser};
pub use poly::{coeff_from_derivatives, CoeffEstimate, PolyObservable};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct SignedIndex(i32);

impl SignedIndex {
    pub fn new(label: i32) -> Result<Self> {
        if label == 0 {
            return invalid("signed index must be nonzero");
        }
        Ok(SignedIndex(label))
    }

    /// Real direction of coordinate `coord`.
    pub fn re(coord: usize) -> Self {
        SignedIndex(coord as i32 + 1)
    }

    /// Imaginary direction of coordinate `coord`.
    pub fn im(coord: usize) -> Self {
        SignedIndex(-(coord as i32 + 1))
    }

    pub fn label(self) -> i32 {
        self.0
    }

    /// 0-based coordinate.
    pub fn coord(self) -> usize {
        self.0.unsigned_abs() as usize - 1
    }

    pub fn is_imag(self) -> bool {
        self.0 < 0
    }

    /// `Re<e_l, z>`.
    pub fn project(self, z: &[Complex64]) -> f64 {
        let c = z[self.coord()];
        if self.is_imag() {
            c.im
        } else {
            c.re
        }
    }

    /// The vector `e_l` in `C^dim`.
    pub fn direction(self, dim: usize) -> Vec<Complex64> {
        let mut v = vec![Complex64::default(); dim];
        v[self.coord()] = if self.is_imag() { Complex64::new(0.0, 1.0) } else { Complex64::new(1.0, 0.0) };
        v
    }

    pub fn sigma(self, cov: &CovarianceModel) -> f64 {
        cov.sigma[self.coord()]
    }
}

impl TryFrom<i32> for SignedIndex {
    type Error = Error;
    fn try_from(v: i32) -> Result<Self> {
        SignedIndex::new(v)
    }
}

impl From<SignedIndex> for i32 {
    fn from(s: SignedIndex) -> i32 {
        s.0
    }
}

impl fmt::Debug for SignedIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.0)
    }
}

/// Sorted multiset of signed indices.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<SignedIndex>", into = "Vec<SignedIndex>")]
pub struct WickMonomial {
    indices: Vec<SignedIndex>,
}

impl WickMonomial {
    pub fn new(mut indices: Vec<SignedIndex>) -> Self {
        indices.sort();
        WickMonomial { indices }
    }

    pub fn from_labels(labels: &[i32]) -> Result<Self> {
        Ok(Self::new(labels.iter().map(|&l| SignedIndex::new(l)).collect::<Result<_>>()?))
    }

    pub fn indices(&self) -> &[SignedIndex] {
        &self.indices
    }

    pub fn degree(&self) -> usize {
        self.indices.len()
    }

    /// Run-length groups `(index, multiplicity)`.
    pub fn groups(&self) -> Vec<(SignedIndex, usize)> {
        let mut out: Vec<(SignedIndex, usize)> = Vec::new();
        for &i in &self.indices {
            match out.last_mut() {
                Some((j, m)) if *j == i => *m += 1,
                _ => out.push((i, 1)),
            }
        }
        out
    }

    /// `prod_t l_t!` over the groups.
    pub fn multiplicity_factorial(&self) -> f64 {
        self.groups().iter().map(|&(_, m)| factorial(m)).product()
    }

    /// Number of ordered tuples that sort to this monomial, `k! / prod l_t!`.
    pub fn ordered_copies(&self) -> f64 {
        factorial(self.degree()) / self.multiplicity_factorial()
    }

    /// `prod_s sigma_{l_s}^2`, multiplied in index order.
    pub fn sigma_product(&self, cov: &CovarianceModel) -> f64 {
        let mut p = 1.0;
        for i in &self.indices {
            let s = i.sigma(cov);
            p *= s * s;
        }
        p
    }

    pub fn max_coord(&self) -> Option<usize> {
        self.indices.iter().map(|i| i.coord()).max()
    }
}

impl From<Vec<SignedIndex>> for WickMonomial {
    fn from(v: Vec<SignedIndex>) -> Self {
        WickMonomial::new(v)
    }
}

impl From<WickMonomial> for Vec<SignedIndex> {
    fn from(m: WickMonomial) -> Self {
        m.indices
    }
}

impl fmt::Debug for WickMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.indices)
    }
}

/// Probabilists' Hermite polynomial `He_k(t)`.
///
/// # Panics
/// If `k > 64`.
pub fn hermite(k: usize, t: f64) -> f64 {
    assert!(k <= HERMITE_MAX, "Hermite degree {k} exceeds {HERMITE_MAX}");
    if k == 0 {
        return 1.0;
    }
    let (mut prev, mut cur) = (1.0, t);
    for j in 1..k {
        let next = t * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `sigma^k He_k(y / sigma)`: the Wick power of a centred normal `y` with variance `sigma^2`.
fn wick_scalar(k: usize, y: f64, sigma: f64) -> f64 {
    sigma.powi(k as i32) * hermite(k, y / sigma)
}

/// `:(Re<x, z>)^k:` for a direction `x` whose projection has standard deviation `sigma_x`.
pub fn wick_power_eval(x: &[Complex64], k: usize, z: &[Complex64], sigma_x: f64) -> Result<f64> {
    if k == 0 {
        return Ok(1.0);
    }
    if !(sigma_x > 0.0) {
        return invalid("degenerate direction: sigma_x must be positive");
    }
    let y: f64 = x.iter().zip(z).map(|(a, b)| (a.conj() * b).re).sum();
    Ok(wick_scalar(k, y, sigma_x))
}

/// Value of a Wick monomial at `z`; distinct signed indices factorise.
pub fn monomial_eval(mono: &WickMonomial, z: &[Complex64], cov: &CovarianceModel) -> Result<f64> {
    let mut v = 1.0;
    for (i, m) in mono.groups() {
        let s = i.sigma(cov);
        if !(s > 0.0) {
            return invalid(format!("degenerate direction {i:?}: sigma is zero"));
        }
        v *= wick_scalar(m, i.project(z), s);
    }
    Ok(v)
}

/// `prod l_t! sigma_{j_t}^{2 l_t}`.
pub fn monomial_variance(mono: &WickMonomial, cov: &CovarianceModel) -> f64 {
    mono.sigma_product(cov) * mono.multiplicity_factorial()
}

/// `int :a: :b: dm`.
pub fn monomial_gram(a: &WickMonomial, b: &WickMonomial, cov: &CovarianceModel) -> f64 {
    if a == b {
        monomial_variance(a, cov)
    } else {
        0.0
    }
}

/// `Re<e_j, T^n e_l>` read off a transfer table.
pub fn transfer_entry(t: &Transfer, j: SignedIndex, l: SignedIndex) -> f64 {
    let v = t.entry(j.coord(), l.coord());
    match (j.is_imag(), l.is_imag()) {
        (false, false) | (true, true) => v.re,
        (false, true) => -v.im,
        (true, false) => v.im,
    }
}

/// Matrix `M[t][s] = Re<e_{a_t}, T^n e_{b_s}>` in row-major order.
pub fn corr_matrix(t: &Transfer, a: &WickMonomial, b: &WickMonomial) -> Vec<f64> {
    let mut m = Vec::with_capacity(a.degree() * b.degree());
    for &j in a.indices() {
        for &l in b.indices() {
            m.push(transfer_entry(t, j, l));
        }
    }
    m
}

fn monomial_corr_with(t: &Transfer, a: &WickMonomial, b: &WickMonomial, cov: &CovarianceModel) -> Result<f64> {
    let k = a.degree();
    if k != b.degree() {
        return Ok(0.0);
    }
    if k > PERMANENT_MAX {
        return Err(Error::UnsupportedDegree(k));
    }
    let m = corr_matrix(t, a, b);
    if (0..k).any(|r| m[r * k..(r + 1) * k].iter().all(|v| *v == 0.0)) {
        return Ok(0.0);
    }
    Ok(b.sigma_product(cov) * permanent(&m, k)?)
}

/// `int :a:(T^n x) :b:(x) dm(x) = sigma_{b}^2 ... perm(M)`.
pub fn monomial_corr(
    a: &WickMonomial,
    b: &WickMonomial,
    model: &OperatorModel,
    cov: &CovarianceModel,
    n: usize,
) -> Result<f64> {
    if a.degree() != b.degree() {
        return Ok(0.0);
    }
    if a.degree() > PERMANENT_MAX {
        return Err(Error::UnsupportedDegree(a.degree()));
    }
    monomial_corr_with(&model.transfer(n), a, b, cov)
}

/// Real observable given by its Wick expansion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChaosObservable {
    pub degree0: f64,
    terms: BTreeMap<WickMonomial, f64>,
}

impl ChaosObservable {
    pub fn constant(c: f64) -> Self {
        ChaosObservable { degree0: c, terms: BTreeMap::new() }
    }

    /// Add `coeff` to the coefficient of `mono`; degree-0 monomials go to the mean.
    pub fn add_term(&mut self, mono: WickMonomial, coeff: f64) {
        if mono.degree() == 0 {
            self.degree0 += coeff;
            return;
        }
        *self.terms.entry(mono).or_insert(0.0) += coeff;
    }

    pub fn with_term(mut self, mono: WickMonomial, coeff: f64) -> Self {
        self.add_term(mono, coeff);
        self
    }

    /// `Re<v, .>` as a degree-1 observable.
    pub fn linear(v: &[Complex64]) -> Self {
        let mut f = ChaosObservable::default();
        for (k, c) in v.iter().enumerate() {
            if c.re != 0.0 {
                f.add_term(WickMonomial::new(vec![SignedIndex::re(k)]), c.re);
            }
            if c.im != 0.0 {
                f.add_term(WickMonomial::new(vec![SignedIndex::im(k)]), c.im);
            }
        }
        f
    }

    pub fn terms(&self) -> impl Iterator<Item = (&WickMonomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, mono: &WickMonomial) -> f64 {
        self.terms.get(mono).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    /// Degrees with at least one term, ascending.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.terms.keys().map(|m| m.degree()).collect();
        d.dedup();
        d.sort_unstable();
        d.dedup();
        d
    }

    /// The homogeneous component `f_k` (mean zero).
    pub fn component(&self, k: usize) -> ChaosObservable {
        ChaosObservable {
            degree0: if k == 0 { self.degree0 } else { 0.0 },
            terms: self.terms.iter().filter(|(m, _)| m.degree() == k).map(|(m, &c)| (m.clone(), c)).collect(),
        }
    }

    pub fn max_coord(&self) -> Option<usize> {
        self.terms.keys().filter_map(|m| m.max_coord()).max()
    }

    pub fn eval(&self, z: &[Complex64], cov: &CovarianceModel) -> Result<f64> {
        let mut v = self.degree0;
        for (m, c) in &self.terms {
            v += c * monomial_eval(m, z, cov)?;
        }
        Ok(v)
    }

    /// `||f||^2_{L^2(m)} = degree0^2 + sum a^2 var`.
    pub fn l2_norm_sq(&self, cov: &CovarianceModel) -> f64 {
        self.degree0 * self.degree0
            + self.terms.iter().map(|(m, c)| c * c * monomial_variance(m, cov)).sum::<f64>()
    }

    /// Precompute the evaluation plan for repeated evaluation.
    pub fn compile(&self, cov: &CovarianceModel) -> Result<CompiledChaos> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (m, &c) in &self.terms {
            let mut groups = Vec::new();
            for (i, mult) in m.groups() {
                let s = i.sigma(cov);
                if !(s > 0.0) {
                    return invalid(format!("degenerate direction {i:?}: sigma is zero"));
                }
                groups.push((i, mult, s));
            }
            terms.push((c, groups));
        }
        Ok(CompiledChaos { degree0: self.degree0, terms })
    }
}

/// Evaluation plan for a [`ChaosObservable`] under a fixed covariance.
#[derive(Debug, Clone)]
pub struct CompiledChaos {
    degree0: f64,
    terms: Vec<(f64, Vec<(SignedIndex, usize, f64)>)>,
}

impl CompiledChaos {
    pub fn eval(&self, z: &[Complex64]) -> f64 {
        let mut v = self.degree0;
        for (c, groups) in &self.terms {
            let mut p = *c;
            for &(i, m, s) in groups {
                p *= wick_scalar(m, i.project(z), s);
            }
            v += p;
        }
        v
    }

    pub fn mean(&self) -> f64 {
        self.degree0
    }
}

#[derive(Serialize, Deserialize)]
struct TermRecord {
    degree: usize,
    indices: Vec<SignedIndex>,
    coeff: f64,
}

#[derive(Serialize, Deserialize)]
struct ObservableRecord {
    #[serde(default)]
    degree0: f64,
    #[serde(default)]
    terms: Vec<TermRecord>,
}

impl Serialize for ChaosObservable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ObservableRecord {
            degree0: self.degree0,
            terms: self
                .terms
                .iter()
                .map(|(m, &c)| TermRecord { degree: m.degree(), indices: m.indices().to_vec(), coeff: c })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChaosObservable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = ObservableRecord::deserialize(d)?;
        let mut f = ChaosObservable::constant(rec.degree0);
        for t in rec.terms {
            if t.indices.len() != t.degree {
                return Err(serde::de::Error::custom(format!(
                    "term degree {} does not match {} indices",
                    t.degree,
                    t.indices.len()
                )));
            }
            f.add_term(WickMonomial::new(t.indices), t.coeff);
        }
        Ok(f)
    }
}

/// `I_n(f_k, g_k)` for each degree `k >= 1` present in both observables.
pub fn chaos_corr_by_degree(
    f: &ChaosObservable,
    g: &ChaosObservable,
    model: &OperatorModel,
    cov: &CovarianceModel,
    n: usize,
) -> Result<Vec<(usize, f64)>> {
    if cov.dim() != model.dim {
        return invalid("covariance and operator dimensions differ");
    }
    if f.max_coord().max(g.max_coord()).is_some_and(|c| c >= model.dim) {
        return invalid("observable index exceeds the model dimension");
    }
    let transfer = model.transfer(n);
    let mut by_degree: BTreeMap<usize, Vec<(&WickMonomial, f64)>> = BTreeMap::new();
    for (m, c) in g.terms() {
        by_degree.entry(m.degree()).or_default().push((m, c));
    }
    let f_terms: Vec<(&WickMonomial, f64)> = f.terms().collect();
    let partials: Vec<Result<(usize, f64)>> = f_terms
        .par_iter()
        .map(|&(a, ca)| {
            let mut s = 0.0;
            if let Some(list) = by_degree.get(&a.degree()) {
                for &(b, cb) in list {
                    let v = monomial_corr_with(&transfer, a, b, cov)?;
                    s += ca * cb * v;
                }
            }
            Ok((a.degree(), s))
        })
        .collect();
    let mut out: BTreeMap<usize, f64> = BTreeMap::new();
    for p in partials {
        let (k, v) = p?;
        if by_degree.contains_key(&k) {
            *out.entry(k).or_insert(0.0) += v;
        }
    }
    Ok(out.into_iter().collect())
}

/// `I_n(f, g) = sum_{k >= 1} I_n(f_k, g_k)`.
pub fn chaos_corr(
    f: &ChaosObservable,
    g: &ChaosObservable,
    model: &OperatorModel,
    cov: &CovarianceModel,
    n: usize,
) -> Result<f64> {
    Ok(chaos_corr_by_degree(f, g, model, cov, n)?.iter().map(|(_, v)| v).sum())
}

/// Random observable with up to `max_terms` Wick monomials of degree `1..=max_degree`
/// on coordinates below `max_coord`, coefficients uniform in `[-1, 1]`.
pub fn random_observable<R: rand::Rng + ?Sized>(
    rng: &mut R,
    max_coord: usize,
    max_degree: usize,
    max_terms: usize,
) -> ChaosObservable {
    let mut f = ChaosObservable::constant(rng.random_range(-1.0..1.0));
    let terms = rng.random_range(1..=max_terms.max(1));
    for _ in 0..terms {
        let deg = rng.random_range(1..=max_degree.max(1));
        let idx = (0..deg)
            .map(|_| {
                let c = rng.random_range(0..max_coord.max(1));
                if rng.random_bool(0.5) { SignedIndex::re(c) } else { SignedIndex::im(c) }
            })
            .collect();
        f.add_term(WickMonomial::new(idx), rng.random_range(-1.0..1.0));
    }
    f
}
