//! T-eigenvector fields `lambda -> E(lambda)` on the unit circle.
//!
//! Three families are shipped. Weighted-shift fields have coefficients
//! `c_0 = 1, c_k = k^-kappa`. Analytic fields have `c_k = w^-k`. Both are
//! monomial: `E(lambda) = sum_k c_k lambda^k e_k` on `e_0 .. e_{N-1}`.
//!
//! The Kalisch field is the indicator `1_(alpha, 2 pi)` at `lambda = e^{i alpha}`,
//! written in the exponential basis of `L^2([0, 2 pi], d theta / 2 pi)`.
//! Coordinate `k` carries the frequency [`kalisch_frequency`]`(k)`, i.e.
//! `0, 1, -1, 2, -2, ...`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tolerances::{HOLDER_MIN_SCALE, UNIMODULAR_TOL};
use crate::util::linear_fit;

/// Serializable description of a field family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    WeightedShift { kappa: f64, dim: usize },
    Analytic { w: [f64; 2], dim: usize },
    Kalisch { dim: usize },
}

impl FieldSpec {
    pub fn dim(&self) -> usize {
        match *self {
            FieldSpec::WeightedShift { dim, .. }
            | FieldSpec::Analytic { dim, .. }
            | FieldSpec::Kalisch { dim } => dim,
        }
    }

    pub fn build(&self) -> Result<EigenvectorField> {
        match *self {
            FieldSpec::WeightedShift { kappa, dim } => make_weighted_shift_field(kappa, dim),
            FieldSpec::Analytic { w, dim } => make_analytic_field(Complex64::new(w[0], w[1]), dim),
            FieldSpec::Kalisch { dim } => make_kalisch_field(dim),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Monomial,
    Kalisch,
    Custom,
}

pub type Evaluator = Arc<dyn Fn(Complex64) -> Vec<Complex64> + Send + Sync>;

#[derive(Clone)]
pub struct EigenvectorField {
    pub dim: usize,
    pub kind: FieldKind,
    /// Monomial coefficients `c_0 .. c_{N-1}`; empty for other kinds.
    pub coeffs: Vec<Complex64>,
    evaluator: Option<Evaluator>,
    pub holder_alpha: Option<f64>,
    pub holder_const: Option<f64>,
    /// Bound on `sum_{k >= N} |c_k|^2`.
    pub tail_bound: f64,
    /// All monomial coefficients are real.
    pub real_coeffs: bool,
    /// Family the field was built from, if any.
    pub spec: Option<FieldSpec>,
}

impl fmt::Debug for EigenvectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EigenvectorField")
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("holder_alpha", &self.holder_alpha)
            .field("tail_bound", &self.tail_bound)
            .field("spec", &self.spec)
            .finish()
    }
}

impl EigenvectorField {
    /// Monomial field with explicit coefficients.
    pub fn from_coeffs(coeffs: Vec<Complex64>, tail_bound: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return invalid("monomial field needs at least one coefficient");
        }
        let real_coeffs = coeffs.iter().all(|c| c.im == 0.0);
        Ok(EigenvectorField {
            dim: coeffs.len(),
            kind: FieldKind::Monomial,
            coeffs,
            evaluator: None,
            holder_alpha: None,
            holder_const: None,
            tail_bound,
            real_coeffs,
            spec: None,
        })
    }

    /// Field given by an arbitrary evaluator returning `dim` coordinates.
    pub fn custom(dim: usize, evaluator: Evaluator) -> Result<Self> {
        if dim == 0 {
            return invalid("dim must be positive");
        }
        Ok(EigenvectorField {
            dim,
            kind: FieldKind::Custom,
            coeffs: Vec::new(),
            evaluator: Some(evaluator),
            holder_alpha: None,
            holder_const: None,
            tail_bound: 0.0,
            real_coeffs: false,
            spec: None,
        })
    }

    pub fn is_monomial(&self) -> bool {
        self.kind == FieldKind::Monomial
    }

    /// Evaluate without the unimodularity check.
    pub(crate) fn eval_unchecked(&self, lambda: Complex64) -> Vec<Complex64> {
        match &self.evaluator {
            Some(ev) => ev(lambda),
            None => {
                let mut p = Complex64::new(1.0, 0.0);
                self.coeffs
                    .iter()
                    .map(|&c| {
                        let v = c * p;
                        p *= lambda;
                        v
                    })
                    .collect()
            }
        }
    }
}

pub fn make_weighted_shift_field(kappa: f64, dim: usize) -> Result<EigenvectorField> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return invalid(format!("kappa must be positive, got {kappa}"));
    }
    if dim < 2 {
        return invalid(format!("dim must be at least 2, got {dim}"));
    }
    let coeffs = (0..dim)
        .map(|k| {
            let c = if k == 0 { 1.0 } else { (k as f64).powf(-kappa) };
            Complex64::new(c, 0.0)
        })
        .collect();
    let tail = if kappa > 0.5 {
        ((dim - 1) as f64).powf(1.0 - 2.0 * kappa) / (2.0 * kappa - 1.0)
    } else {
        f64::INFINITY
    };
    let mut field = EigenvectorField::from_coeffs(coeffs, tail)?;
    field.holder_alpha = (kappa > 0.5).then(|| (kappa - 0.5).min(1.0));
    field.spec = Some(FieldSpec::WeightedShift { kappa, dim });
    Ok(field)
}

pub fn make_analytic_field(w: Complex64, dim: usize) -> Result<EigenvectorField> {
    let r = w.norm();
    if !(r > 1.0) || !r.is_finite() {
        return invalid(format!("|w| must exceed 1, got {r}"));
    }
    if dim == 0 {
        return invalid("dim must be positive");
    }
    let inv = w.inv();
    let mut p = Complex64::new(1.0, 0.0);
    let coeffs = (0..dim)
        .map(|_| {
            let c = p;
            p *= inv;
            c
        })
        .collect();
    let q = r.powi(-2);
    let tail = q.powi(dim as i32) / (1.0 - q);
    let mut field = EigenvectorField::from_coeffs(coeffs, tail)?;
    field.holder_alpha = Some(1.0);
    field.spec = Some(FieldSpec::Analytic { w: [w.re, w.im], dim });
    Ok(field)
}

/// Frequency carried by coordinate `k` of the Kalisch basis.
pub fn kalisch_frequency(k: usize) -> i64 {
    if k == 0 {
        0
    } else if k % 2 == 1 {
        (k as i64 + 1) / 2
    } else {
        -(k as i64) / 2
    }
}

/// Coordinate carrying frequency `m`, if it is below `dim`.
pub fn kalisch_coordinate(m: i64, dim: usize) -> Option<usize> {
    let k = match m {
        0 => 0,
        m if m > 0 => 2 * m as usize - 1,
        m => 2 * (-m) as usize,
    };
    (k < dim).then_some(k)
}

/// Coefficient of `1_(alpha, 2 pi)` against `e^{i m theta}` in `L^2(d theta / 2 pi)`.
pub fn kalisch_coefficient(m: i64, alpha: f64) -> Complex64 {
    if m == 0 {
        Complex64::new((2.0 * PI - alpha) / (2.0 * PI), 0.0)
    } else {
        let mf = m as f64;
        let e = Complex64::from_polar(1.0, -mf * alpha);
        (e - 1.0) / Complex64::new(0.0, 2.0 * PI * mf)
    }
}

pub fn make_kalisch_field(dim: usize) -> Result<EigenvectorField> {
    if dim < 2 {
        return invalid(format!("dim must be at least 2, got {dim}"));
    }
    let ev: Evaluator = Arc::new(move |lambda: Complex64| {
        let alpha = lambda.arg().rem_euclid(2.0 * PI);
        (0..dim)
            .map(|k| kalisch_coefficient(kalisch_frequency(k), alpha))
            .collect()
    });
    let mut field = EigenvectorField::custom(dim, ev)?;
    field.kind = FieldKind::Kalisch;
    field.holder_alpha = Some(0.5);
    field.holder_const = Some((2.0 * PI).powf(-0.5));
    // |coefficient m| <= 1 / (pi |m|); the smallest excluded |m| is dim / 2 or so.
    let m_min = (dim / 2 + 1) as f64;
    field.tail_bound = 2.0 / (PI * PI * (m_min - 1.0).max(1.0));
    field.spec = Some(FieldSpec::Kalisch { dim });
    Ok(field)
}

pub fn eval_field(field: &EigenvectorField, lambda: Complex64) -> Result<Vec<Complex64>> {
    if (lambda.norm() - 1.0).abs() > UNIMODULAR_TOL {
        return invalid(format!("lambda must be unimodular, |lambda| = {}", lambda.norm()));
    }
    Ok(field.eval_unchecked(lambda))
}

/// Default quadrature size for fields that are not monomial.
pub fn default_quad_nodes(dim: usize) -> usize {
    (4 * dim).max(4096)
}

/// `||E||_2^2`, the mean of `||E(lambda)||^2` over the circle.
pub fn field_norm_sq(field: &EigenvectorField) -> f64 {
    field_norm_sq_with(field, default_quad_nodes(field.dim))
}

pub fn field_norm_sq_with(field: &EigenvectorField, quad_nodes: usize) -> f64 {
    if field.is_monomial() {
        return field.coeffs.iter().map(|c| c.norm_sqr()).sum();
    }
    let m = quad_nodes.max(1);
    let total: f64 = (0..m)
        .into_par_iter()
        .map(|j| {
            let lambda = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64);
            field.eval_unchecked(lambda).iter().map(|c| c.norm_sqr()).sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / m as f64
}

/// `||E(e^{i theta}) - E(1)||^2`.
pub fn pairwise_gap(field: &EigenvectorField, theta: f64) -> f64 {
    if field.is_monomial() {
        return field
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let s = (0.5 * k as f64 * theta).sin();
                4.0 * c.norm_sqr() * s * s
            })
            .sum();
    }
    let a = field.eval_unchecked(Complex64::from_polar(1.0, theta));
    let b = field.eval_unchecked(Complex64::new(1.0, 0.0));
    a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// `||E(lambda) - E(xi)||` for two unimodular points.
pub fn gap_between(field: &EigenvectorField, lambda: Complex64, xi: Complex64) -> Result<f64> {
    let a = eval_field(field, lambda)?;
    let b = eval_field(field, xi)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub alpha_hat: f64,
    pub c_hat: f64,
    pub r_squared: f64,
}

/// Fit `log ||E(e^{i theta}) - E(1)||` against `log theta` on a geometric grid.
pub fn holder_estimate(
    field: &EigenvectorField,
    theta_min: f64,
    theta_max: f64,
    grid_points: usize,
) -> Result<HolderFit> {
    if grid_points < 8 {
        return invalid(format!("grid_points must be at least 8, got {grid_points}"));
    }
    if !(theta_min > 0.0 && theta_min < theta_max && theta_max <= PI) {
        return invalid(format!(
            "need 0 < theta_min < theta_max <= pi, got [{theta_min}, {theta_max}]"
        ));
    }
    if field.is_monomial() && theta_min * (field.dim as f64) < HOLDER_MIN_SCALE {
        return invalid(format!(
            "theta_min = {theta_min} is below the truncation scale {HOLDER_MIN_SCALE}/dim"
        ));
    }
    let rho = (theta_min / theta_max).powf(1.0 / (grid_points - 1) as f64);
    let thetas: Vec<f64> = (0..grid_points).map(|j| theta_max * rho.powi(j as i32)).collect();
    let gaps: Vec<f64> = thetas.par_iter().map(|&t| pairwise_gap(field, t)).collect();
    if gaps.iter().any(|&g| g <= 0.0) {
        return invalid("field gap vanishes on the grid");
    }
    let xs: Vec<f64> = thetas.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| 0.5 * g.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(HolderFit { alpha_hat: slope, c_hat: intercept.exp(), r_squared: r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn re(v: &[Complex64]) -> Vec<f64> {
        v.iter().map(|c| c.re).collect()
    }

    #[test]
    fn weighted_shift_coefficients() {
        let f = make_weighted_shift_field(1.0, 4).unwrap();
        assert_eq!(re(&f.coeffs), vec![1.0, 1.0, 0.5, 1.0 / 3.0]);
        assert_eq!(f.holder_alpha, Some(0.5));
        let f = make_weighted_shift_field(1.0, 2).unwrap();
        assert_eq!(re(&f.coeffs), vec![1.0, 1.0]);
        assert!(f.tail_bound <= 1.0);
        assert!(make_weighted_shift_field(2.0, 8).unwrap().holder_alpha == Some(1.0));
        assert!(make_weighted_shift_field(0.4, 8).unwrap().holder_alpha.is_none());
    }

    #[test]
    fn weighted_shift_rejects_bad_input() {
        assert!(make_weighted_shift_field(0.0, 4).is_err());
        assert!(make_weighted_shift_field(-1.0, 4).is_err());
        assert!(make_weighted_shift_field(1.0, 1).is_err());
    }

    #[test]
    fn tail_bound_decreases_with_dim() {
        let mut prev = f64::INFINITY;
        for dim in [2, 4, 16, 100, 1000] {
            let t = make_weighted_shift_field(1.3, dim).unwrap().tail_bound;
            assert!(t < prev);
            prev = t;
        }
    }

    #[test]
    fn tail_bound_covers_series_remainder() {
        // partial sums of k^-2 from dim up to a large cutoff stay below the bound
        for dim in [2usize, 5, 50] {
            let f = make_weighted_shift_field(1.0, dim).unwrap();
            let rem: f64 = (dim..2_000_000).map(|k| (k as f64).powi(-2)).sum();
            assert!(rem <= f.tail_bound, "dim {dim}: {rem} > {}", f.tail_bound);
        }
    }

    #[test]
    fn norm_of_kappa_one_field() {
        let f = make_weighted_shift_field(1.0, 100_000).unwrap();
        let oracle = 1.0 + PI * PI / 6.0;
        assert_abs_diff_eq!(field_norm_sq(&f), oracle, epsilon = 1e-4);
        assert!(field_norm_sq(&f) <= oracle);
        assert!(field_norm_sq(&f) + f.tail_bound >= oracle);
    }

    #[test]
    fn analytic_field() {
        let f = make_analytic_field(Complex64::new(2.0, 0.0), 3).unwrap();
        assert_eq!(re(&f.coeffs), vec![1.0, 0.5, 0.25]);
        let f = make_analytic_field(Complex64::new(2.0, 0.0), 60).unwrap();
        assert_abs_diff_eq!(field_norm_sq(&f), 4.0 / 3.0, epsilon = 1e-14);
        assert!(make_analytic_field(Complex64::new(1.0, 0.0), 4).is_err());
        assert!(make_analytic_field(Complex64::new(0.0, 0.5), 4).is_err());
    }

    #[test]
    fn evaluation_examples() {
        let f = make_analytic_field(Complex64::new(2.0, 0.0), 3).unwrap();
        let v = eval_field(&f, Complex64::new(-1.0, 0.0)).unwrap();
        assert_eq!(re(&v), vec![1.0, -0.5, 0.25]);
        let f = make_weighted_shift_field(1.0, 3).unwrap();
        let v = eval_field(&f, Complex64::new(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!((v[1] - Complex64::new(0.0, 1.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((v[2] - Complex64::new(-0.5, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let v = eval_field(&f, Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(v, f.coeffs);
        assert!(eval_field(&f, Complex64::new(1.1, 0.0)).is_err());
    }

    #[test]
    fn single_coordinate_field() {
        let f = EigenvectorField::from_coeffs(vec![Complex64::new(1.0, 0.0)], 0.0).unwrap();
        assert_eq!(field_norm_sq(&f), 1.0);
    }

    #[test]
    fn gap_formula_kappa_one() {
        let f = make_weighted_shift_field(1.0, 100_000).unwrap();
        for theta in [1.0, PI] {
            let oracle = PI * theta - theta * theta / 2.0;
            let g = pairwise_gap(&f, theta);
            assert_abs_diff_eq!(g, oracle, epsilon = 1e-3);
            assert!(g <= oracle + 1e-12);
        }
        assert!(pairwise_gap(&f, 1e-9) < 1e-8);
    }

    #[test]
    fn gap_increases_with_dim() {
        let mut prev = 0.0;
        for dim in [4, 16, 64, 256] {
            let g = pairwise_gap(&make_weighted_shift_field(1.0, dim).unwrap(), 0.7);
            assert!(g >= prev);
            prev = g;
        }
    }

    #[test]
    fn quadrature_norm_matches_closed_form() {
        let f = make_weighted_shift_field(1.0, 32).unwrap();
        let closed = field_norm_sq(&f);
        let ev = {
            let g = f.clone();
            Arc::new(move |l: Complex64| g.eval_unchecked(l)) as Evaluator
        };
        let custom = EigenvectorField::custom(32, ev).unwrap();
        for m in [64, 65, 100, 512] {
            assert_abs_diff_eq!(field_norm_sq_with(&custom, m), closed, epsilon = 1e-12);
        }
    }

    #[test]
    fn kalisch_coefficients() {
        let f = make_kalisch_field(9).unwrap();
        let v = eval_field(&f, Complex64::new(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(v[0].re, 1.0, epsilon = 1e-15);
        for c in &v[1..] {
            assert_abs_diff_eq!(c.norm(), 0.0, epsilon = 1e-15);
        }
        let v = eval_field(&f, Complex64::new(-1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(v[0].re, 0.5, epsilon = 1e-15);
        // direct midpoint integral of the indicator against e^{-i m theta}
        let alpha = 2.0;
        let lam = Complex64::from_polar(1.0, alpha);
        let v = eval_field(&f, lam).unwrap();
        for (k, c) in v.iter().enumerate() {
            let m = kalisch_frequency(k) as f64;
            let steps = 200_000;
            let h = (2.0 * PI - alpha) / steps as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for s in 0..steps {
                let t = alpha + (s as f64 + 0.5) * h;
                acc += Complex64::from_polar(1.0, -m * t) * h;
            }
            acc /= 2.0 * PI;
            assert_abs_diff_eq!((acc - c).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn kalisch_frequency_roundtrip() {
        for k in 0..50 {
            assert_eq!(kalisch_coordinate(kalisch_frequency(k), 50), Some(k));
        }
        assert_eq!(kalisch_coordinate(30, 50), None);
    }

    #[test]
    fn kalisch_gap_converges() {
        // in L^2(d theta / 2 pi) the gap between indicators is (beta - alpha) / 2 pi
        let f = make_kalisch_field(4001).unwrap();
        let (a, b) = (0.5, 2.5);
        let g = gap_between(&f, Complex64::from_polar(1.0, a), Complex64::from_polar(1.0, b)).unwrap();
        let oracle = (b - a) / (2.0 * PI);
        assert!((g * g - oracle).abs() < 2.0 * f.tail_bound, "{} vs {oracle}", g * g);
    }

    #[test]
    fn holder_recovers_exponents() {
        for (kappa, alpha) in [(1.0, 0.5), (2.0, 1.0)] {
            let f = make_weighted_shift_field(kappa, 200_000).unwrap();
            let fit = holder_estimate(&f, 5e-3, 0.2, 24).unwrap();
            assert!((fit.alpha_hat - alpha).abs() < 0.05, "{kappa}: {fit:?}");
            assert!(fit.r_squared > 0.99);
        }
        let f = make_analytic_field(Complex64::new(2.0, 0.0), 1000).unwrap();
        let fit = holder_estimate(&f, 0.01, 0.1, 16).unwrap();
        assert!((fit.alpha_hat - 1.0).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn holder_rejects_degenerate_grids() {
        let f = make_weighted_shift_field(1.0, 1000).unwrap();
        assert!(holder_estimate(&f, 0.1, 0.1, 16).is_err());
        assert!(holder_estimate(&f, 0.1, 4.0, 16).is_err());
        assert!(holder_estimate(&f, 0.1, 1.0, 4).is_err());
        assert!(holder_estimate(&f, 1e-3, 1.0, 16).is_err());
    }
}
