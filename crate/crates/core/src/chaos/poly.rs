//! Explicit polynomials in signed coordinates and their Wick coefficients.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ChaosObservable, SignedIndex, WickMonomial};
use crate::error::{invalid, Result};
use crate::measure::GaussianSampler;
use crate::model::CovarianceModel;
use crate::tolerances::MC_BATCHES;
use crate::util::{batch_means, factorial};

/// `P(y_1, ..., y_r)` with `y_i = Re<e_{vars[i]}, x>` and raw (non-Wick) powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyObservable {
    pub vars: Vec<SignedIndex>,
    /// `(exponents, coefficient)`; exponents align with `vars`.
    pub terms: Vec<(Vec<u32>, f64)>,
}

impl PolyObservable {
    pub fn new(vars: Vec<SignedIndex>, terms: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        let mut sorted = vars.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != vars.len() {
            return invalid("polynomial variables must be distinct");
        }
        if terms.iter().any(|(e, _)| e.len() != vars.len()) {
            return invalid("exponent vectors must match the variables");
        }
        Ok(PolyObservable { vars, terms })
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e.iter().sum()).max().unwrap_or(0)
    }

    fn coords(&self, z: &[Complex64]) -> Vec<f64> {
        self.vars.iter().map(|v| v.project(z)).collect()
    }

    pub fn eval(&self, z: &[Complex64]) -> f64 {
        self.derivative(z, &vec![0; self.vars.len()])
    }

    /// `d^{|o|} P / d y^o` at `z`.
    pub fn derivative(&self, z: &[Complex64], orders: &[u32]) -> f64 {
        let y = self.coords(z);
        self.derivative_at(&y, orders)
    }

    fn derivative_at(&self, y: &[f64], orders: &[u32]) -> f64 {
        let mut total = 0.0;
        for (e, c) in &self.terms {
            if e.iter().zip(orders).any(|(p, o)| o > p) {
                continue;
            }
            let mut t = *c;
            for ((&p, &o), &yi) in e.iter().zip(orders).zip(y) {
                let falling: f64 = (0..o).map(|j| (p - j) as f64).product();
                t *= falling * yi.powi((p - o) as i32);
            }
            total += t;
        }
        total
    }

    /// Wick expansion using `y^p = sum_m p! / (2^m m! (p - 2m)!) sigma^{2m} :y^{p - 2m}:`.
    pub fn to_chaos(&self, cov: &CovarianceModel) -> ChaosObservable {
        let mut out = ChaosObservable::default();
        for (e, c) in &self.terms {
            // cartesian product over variables of their Hermite inversion terms
            let mut partial: Vec<(Vec<SignedIndex>, f64)> = vec![(Vec::new(), *c)];
            for (&v, &p) in self.vars.iter().zip(e) {
                let s2 = v.sigma(cov).powi(2);
                let mut next = Vec::new();
                for (idx, coef) in &partial {
                    for m in 0..=p / 2 {
                        let w = factorial(p as usize)
                            / (2f64.powi(m as i32) * factorial(m as usize) * factorial((p - 2 * m) as usize))
                            * s2.powi(m as i32);
                        let mut idx = idx.clone();
                        idx.extend(std::iter::repeat_n(v, (p - 2 * m) as usize));
                        next.push((idx, coef * w));
                    }
                }
                partial = next;
            }
            for (idx, coef) in partial {
                out.add_term(WickMonomial::new(idx), coef);
            }
        }
        out
    }
}

/// Monte Carlo estimate of one Wick coefficient from the mean of a derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffEstimate {
    pub mono: WickMonomial,
    pub estimate: f64,
    pub stderr: f64,
    /// Coefficient from the algebraic expansion.
    pub exact: f64,
}

/// Estimate `a_{j_1..j_k} = int D^k f(e_{j_1}, ..., e_{j_k}) dm / prod l!` for every
/// sorted `k`-tuple of the polynomial's variables.
///
/// Each draw `x` is paired with `-x`; the pair average is the per-draw value.
pub fn coeff_from_derivatives(
    f: &PolyObservable,
    k: usize,
    cov: &CovarianceModel,
    sampler: &GaussianSampler,
    n_samples: usize,
) -> Result<Vec<CoeffEstimate>> {
    if k == 0 {
        return invalid("derivative order must be positive");
    }
    if n_samples < MC_BATCHES {
        return invalid(format!("need at least {MC_BATCHES} samples"));
    }
    let r = f.vars.len();
    let exact = f.to_chaos(cov);
    let mut out = Vec::new();
    for combo in multisets(r, k) {
        let mut orders = vec![0u32; r];
        for &i in &combo {
            orders[i] += 1;
        }
        let mono = WickMonomial::new(combo.iter().map(|&i| f.vars[i]).collect());
        let norm = mono.multiplicity_factorial();
        let vals = sampler.map_draws(n_samples, |x| {
            let y = f.coords(x);
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            0.5 * (f.derivative_at(&y, &orders) + f.derivative_at(&neg, &orders))
        });
        let (m, se, _) = batch_means(&vals, MC_BATCHES);
        out.push(CoeffEstimate { exact: exact.coeff(&mono), mono, estimate: m / norm, stderr: se / norm });
    }
    Ok(out)
}

/// Nondecreasing `k`-tuples over `0..r`.
fn multisets(r: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, r: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..r {
            cur.push(i);
            rec(i, r, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, r, k, &mut Vec::new(), &mut out);
    out
}
