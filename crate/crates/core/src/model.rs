//! Truncated operators, the diagonal covariance, and linear correlations.
//!
//! Inner products are conjugate-linear in the first slot:
//! `<x, y> = sum_k conj(x_k) y_k`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{
    default_quad_nodes, kalisch_coordinate, kalisch_frequency, EigenvectorField, FieldSpec,
};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    WeightedShift,
    Matrix,
}

/// Truncated operator on `C^N`.
///
/// The weighted shift acts as `(T x)_k = w_{k+1} x_{k+1}` and `(T x)_{N-1} = 0`.
#[derive(Debug, Clone)]
pub struct OperatorModel {
    pub dim: usize,
    pub kind: OperatorKind,
    /// `weights[i]` is `w_{i+1}`; length `dim - 1`.
    weights: Vec<Complex64>,
    matrix: Option<DMatrix<Complex64>>,
}

impl OperatorModel {
    pub fn weighted_shift(weights: Vec<Complex64>) -> Self {
        OperatorModel {
            dim: weights.len() + 1,
            kind: OperatorKind::WeightedShift,
            weights,
            matrix: None,
        }
    }

    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return invalid("operator matrix must be square and nonempty");
        }
        Ok(OperatorModel {
            dim: matrix.nrows(),
            kind: OperatorKind::Matrix,
            weights: Vec::new(),
            matrix: Some(matrix),
        })
    }

    /// `w_n` for `1 <= n < dim`.
    pub fn weight(&self, n: usize) -> Complex64 {
        self.weights[n - 1]
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn matrix(&self) -> Option<&DMatrix<Complex64>> {
        self.matrix.as_ref()
    }

    /// Largest weight modulus; bounds `||T||` for shifts.
    pub fn max_weight(&self) -> f64 {
        self.weights.iter().map(|w| w.norm()).fold(0.0, f64::max)
    }

    pub fn check_compatible(&self, field: &EigenvectorField) -> Result<()> {
        if field.dim != self.dim {
            return invalid(format!("field dim {} differs from operator dim {}", field.dim, self.dim));
        }
        Ok(())
    }

    /// `pw[k] = w_{k+1} ... w_{k+n}` for `k + n < dim`, so that `(T^n x)_k = pw[k] x_{k+n}`.
    pub fn power_weights(&self, n: usize) -> Vec<Complex64> {
        if n >= self.dim {
            return Vec::new();
        }
        (0..self.dim - n)
            .map(|k| self.weights[k..k + n].iter().fold(Complex64::new(1.0, 0.0), |a, &w| a * w))
            .collect()
    }

    pub fn transfer(&self, n: usize) -> Transfer {
        match self.kind {
            OperatorKind::WeightedShift => Transfer::Shift { n, pw: self.power_weights(n) },
            OperatorKind::Matrix => {
                let m = self.matrix.as_ref().expect("matrix operator");
                let mut p = DMatrix::<Complex64>::identity(self.dim, self.dim);
                for _ in 0..n {
                    p = m * p;
                }
                Transfer::Dense(p)
            }
        }
    }

    pub fn apply_power(&self, n: usize, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x)?;
        Ok(match self.kind {
            OperatorKind::WeightedShift => {
                let pw = self.power_weights(n);
                let mut out = vec![ZERO; self.dim];
                for (k, p) in pw.iter().enumerate() {
                    out[k] = p * x[k + n];
                }
                out
            }
            OperatorKind::Matrix => {
                let m = self.matrix.as_ref().expect("matrix operator");
                let mut v = nalgebra::DVector::from_column_slice(x);
                for _ in 0..n {
                    v = m * v;
                }
                v.as_slice().to_vec()
            }
        })
    }

    /// `(T^*)^n x`.
    pub fn apply_adjoint_power(&self, n: usize, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x)?;
        Ok(match self.kind {
            OperatorKind::WeightedShift => {
                let pw = self.power_weights(n);
                let mut out = vec![ZERO; self.dim];
                for (k, p) in pw.iter().enumerate() {
                    out[k + n] = p.conj() * x[k];
                }
                out
            }
            OperatorKind::Matrix => {
                let m = self.matrix.as_ref().expect("matrix operator").adjoint();
                let mut v = nalgebra::DVector::from_column_slice(x);
                for _ in 0..n {
                    v = &m * v;
                }
                v.as_slice().to_vec()
            }
        })
    }

    fn check_len(&self, x: &[Complex64]) -> Result<()> {
        if x.len() != self.dim {
            return invalid(format!("vector length {} differs from dim {}", x.len(), self.dim));
        }
        Ok(())
    }
}

/// Entries of `T^n` in the coordinate basis.
#[derive(Debug, Clone)]
pub enum Transfer {
    Shift { n: usize, pw: Vec<Complex64> },
    Dense(DMatrix<Complex64>),
}

impl Transfer {
    /// `<e_row, T^n e_col>`.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        match self {
            Transfer::Shift { n, pw } => {
                if col == row + n && row < pw.len() {
                    pw[row]
                } else {
                    ZERO
                }
            }
            Transfer::Dense(m) => m[(row, col)],
        }
    }

    /// Nonzero entries `(row, value)` of column `col`.
    pub fn column(&self, col: usize) -> Vec<(usize, Complex64)> {
        match self {
            Transfer::Shift { n, pw } => {
                if col >= *n && col - n < pw.len() {
                    vec![(col - n, pw[col - n])]
                } else {
                    Vec::new()
                }
            }
            Transfer::Dense(m) => (0..m.nrows())
                .filter_map(|r| {
                    let v = m[(r, col)];
                    (v != ZERO).then_some((r, v))
                })
                .collect(),
        }
    }

    /// Write `T^n x` into `out`.
    pub fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        match self {
            Transfer::Shift { n, pw } => {
                out.fill(ZERO);
                for (k, p) in pw.iter().enumerate() {
                    out[k] = p * x[k + n];
                }
            }
            Transfer::Dense(m) => {
                for (r, o) in out.iter_mut().enumerate() {
                    *o = (0..x.len()).map(|c| m[(r, c)] * x[c]).sum();
                }
            }
        }
    }

    /// `||T^n e_col||^2`.
    pub fn column_norm_sq(&self, col: usize) -> f64 {
        self.column(col).iter().map(|(_, v)| v.norm_sqr()).sum()
    }
}

/// Pair a field family with its operator.
pub fn make_operator(spec: &FieldSpec) -> Result<OperatorModel> {
    match *spec {
        FieldSpec::WeightedShift { kappa, dim } => {
            if !(kappa > 0.0) || dim < 2 {
                return invalid("weighted shift needs kappa > 0 and dim >= 2");
            }
            let weights = (1..dim)
                .map(|n| {
                    let w = if n == 1 { 1.0 } else { (n as f64 / (n - 1) as f64).powf(kappa) };
                    Complex64::new(w, 0.0)
                })
                .collect();
            Ok(OperatorModel::weighted_shift(weights))
        }
        FieldSpec::Analytic { w, dim } => {
            let w = Complex64::new(w[0], w[1]);
            if !(w.norm() > 1.0) || dim < 2 {
                return invalid("analytic operator needs |w| > 1 and dim >= 2");
            }
            Ok(OperatorModel::weighted_shift(vec![w; dim - 1]))
        }
        FieldSpec::Kalisch { dim } => {
            if dim < 2 {
                return invalid("Kalisch operator needs dim >= 2");
            }
            OperatorModel::from_matrix(kalisch_matrix(dim))
        }
    }
}

/// Matrix of `T f(theta) = e^{i theta} f(theta) - int_0^theta i e^{it} f(t) dt`
/// in the truncated exponential basis.
fn kalisch_matrix(dim: usize) -> DMatrix<Complex64> {
    let mut t = DMatrix::<Complex64>::zeros(dim, dim);
    for col in 0..dim {
        let m = kalisch_frequency(col);
        if m == -1 {
            // 1 - i theta, with theta = pi + sum_{j != 0} (i / j) e^{i j theta}
            t[(0, col)] += Complex64::new(1.0, -PI);
            for row in 1..dim {
                let j = kalisch_frequency(row) as f64;
                t[(row, col)] += Complex64::new(1.0 / j, 0.0);
            }
        } else {
            // (m / (m + 1)) e^{i (m + 1) theta} + 1 / (m + 1)
            let mf = m as f64;
            if let Some(row) = kalisch_coordinate(m + 1, dim) {
                t[(row, col)] += Complex64::new(mf / (mf + 1.0), 0.0);
            }
            t[(0, col)] += Complex64::new(1.0 / (mf + 1.0), 0.0);
        }
    }
    t
}

/// Per-coordinate variance parameters: real and imaginary parts of `<e_k, x>`
/// each have variance `sigma_k^2`, so `R = diag(2 sigma_k^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub sigma: Vec<f64>,
}

impl CovarianceModel {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if sigma.is_empty() {
            return invalid("covariance needs at least one coordinate");
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return invalid("sigma entries must be finite and nonnegative");
        }
        Ok(CovarianceModel { sigma })
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    /// `2 sigma_k^2`, the eigenvalues of `R`.
    pub fn r_diag(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| 2.0 * s * s).collect()
    }

    /// `sum_k 2 sigma_k^2`, equal to `||E||_2^2` of the generating field.
    pub fn trace_r(&self) -> f64 {
        self.sigma.iter().map(|s| 2.0 * s * s).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        CovarianceModel { sigma: self.sigma.iter().map(|x| x * s).collect() }
    }
}

/// `sigma_k = sqrt(int |<e_k, E(lambda)>|^2 d mu / 2)`.
pub fn sigma_from_field(field: &EigenvectorField, quad_nodes: usize) -> Result<CovarianceModel> {
    if field.is_monomial() {
        if quad_nodes < 2 * field.dim {
            return invalid(format!(
                "monomial fields need at least {} quadrature nodes, got {quad_nodes}",
                2 * field.dim
            ));
        }
        return CovarianceModel::new(field.coeffs.iter().map(|c| c.norm() * FRAC_1_SQRT_2).collect());
    }
    if quad_nodes < 2 {
        return invalid("quadrature needs at least 2 nodes");
    }
    let mut acc = vec![0.0; field.dim];
    for j in 0..quad_nodes {
        let lambda = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / quad_nodes as f64);
        for (a, v) in acc.iter_mut().zip(field.eval_unchecked(lambda)) {
            *a += v.norm_sqr();
        }
    }
    CovarianceModel::new(acc.iter().map(|a| (0.5 * a / quad_nodes as f64).sqrt()).collect())
}

/// Smallest exact quadrature size for lags up to `n_max`.
pub fn required_nodes(dim: usize, n_max: usize) -> usize {
    2 * dim + n_max
}

/// `<R T*^n x, y>` via the Fourier representation over the field.
pub fn corr_linear(
    field: &EigenvectorField,
    x: &[Complex64],
    y: &[Complex64],
    n: usize,
) -> Result<Complex64> {
    Ok(corr_linear_batch(field, x, y, n, None)?[n])
}

/// `<R T*^n x, y>` for all `n` in `0..=n_max` from one transform of the integrand.
///
/// `quad_nodes` defaults to the next power of two at or above `2 dim + n_max`
/// for monomial fields.
pub fn corr_linear_batch(
    field: &EigenvectorField,
    x: &[Complex64],
    y: &[Complex64],
    n_max: usize,
    quad_nodes: Option<usize>,
) -> Result<Vec<Complex64>> {
    let dim = field.dim;
    if x.len() != dim || y.len() != dim {
        return invalid("vectors must have the field's dimension");
    }
    let need = required_nodes(dim, n_max);
    let m = match quad_nodes {
        Some(m) if m < need => {
            return invalid(format!("quadrature too coarse: {m} nodes, need at least {need}"))
        }
        Some(m) => m,
        None if field.is_monomial() => need.next_power_of_two(),
        None => default_quad_nodes(dim).max(need).next_power_of_two(),
    };
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(m);
    let (mut a, mut b) = if field.is_monomial() {
        let mut a = vec![ZERO; m];
        let mut b = vec![ZERO; m];
        for k in 0..dim {
            a[k] = x[k].conj() * field.coeffs[k];
            b[k] = y[k].conj() * field.coeffs[k];
        }
        ifft.process(&mut a);
        ifft.process(&mut b);
        (a, b)
    } else {
        let mut a = vec![ZERO; m];
        let mut b = vec![ZERO; m];
        for j in 0..m {
            let e = field.eval_unchecked(Complex64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64));
            a[j] = x.iter().zip(&e).map(|(xk, ek)| xk.conj() * ek).sum();
            b[j] = y.iter().zip(&e).map(|(yk, ek)| yk.conj() * ek).sum();
        }
        (a, b)
    };
    for (aj, bj) in a.iter_mut().zip(&b) {
        *aj *= bj.conj();
    }
    ifft.process(&mut a);
    let scale = 1.0 / m as f64;
    b.clear();
    Ok(a[..=n_max].iter().map(|v| v * scale).collect())
}

/// `<R T*^n x, y>` by direct matrix arithmetic.
pub fn corr_linear_direct(
    model: &OperatorModel,
    cov: &CovarianceModel,
    x: &[Complex64],
    y: &[Complex64],
    n: usize,
) -> Result<Complex64> {
    if cov.dim() != model.dim || y.len() != model.dim {
        return invalid("covariance and vectors must have the operator's dimension");
    }
    let z = model.apply_adjoint_power(n, x)?;
    Ok(z.iter()
        .zip(&cov.sigma)
        .zip(y)
        .map(|((zk, s), yk)| (zk * (2.0 * s * s)).conj() * yk)
        .sum())
}

/// `||T E(lambda) - lambda E(lambda)||`.
pub fn eigen_residual(model: &OperatorModel, field: &EigenvectorField, lambda: Complex64) -> Result<f64> {
    model.check_compatible(field)?;
    let e = crate::field::eval_field(field, lambda)?;
    let te = model.apply_power(1, &e)?;
    Ok(te.iter().zip(&e).map(|(a, b)| (a - lambda * b).norm_sqr()).sum::<f64>().sqrt())
}

/// Closed form of the residual for a monomial field under its weighted shift:
/// only the last coordinate drops out, leaving `|c_{N-1}|`.
pub fn shift_residual_closed_form(field: &EigenvectorField) -> Option<f64> {
    field.is_monomial().then(|| field.coeffs[field.dim - 1].norm())
}

/// Message for lags where the truncated shift is close to nilpotent.
pub fn nilpotency_warning(dim: usize, n: usize) -> Option<String> {
    (4 * n > dim).then(|| format!("n = {n} exceeds dim/4 = {}; truncation dominates", dim / 4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_analytic_field, make_kalisch_field, make_weighted_shift_field};
    use approx::assert_abs_diff_eq;

    fn basis(dim: usize, k: usize) -> Vec<Complex64> {
        let mut v = vec![ZERO; dim];
        v[k] = Complex64::new(1.0, 0.0);
        v
    }

    fn kappa_one(dim: usize) -> (EigenvectorField, OperatorModel, CovarianceModel) {
        let spec = FieldSpec::WeightedShift { kappa: 1.0, dim };
        let field = spec.build().unwrap();
        let model = make_operator(&spec).unwrap();
        let cov = sigma_from_field(&field, 2 * dim).unwrap();
        (field, model, cov)
    }

    #[test]
    fn operator_weights() {
        let m = make_operator(&FieldSpec::WeightedShift { kappa: 1.0, dim: 5 }).unwrap();
        let w: Vec<f64> = m.weights().iter().map(|c| c.re).collect();
        assert_eq!(w, vec![1.0, 2.0, 1.5, 4.0 / 3.0]);
        let m = make_operator(&FieldSpec::Analytic { w: [2.0, 0.0], dim: 4 }).unwrap();
        assert!(m.weights().iter().all(|w| *w == Complex64::new(2.0, 0.0)));
        let field = make_weighted_shift_field(1.0, 6).unwrap();
        assert!(m.check_compatible(&field).is_err());
    }

    #[test]
    fn apply_power_examples() {
        let (_, m, _) = kappa_one(6);
        let x = basis(6, 2);
        assert_eq!(m.apply_power(0, &x).unwrap(), x);
        let y = m.apply_power(1, &x).unwrap();
        assert_eq!(y, {
            let mut v = vec![ZERO; 6];
            v[1] = Complex64::new(2.0, 0.0);
            v
        });
        let ones = vec![Complex64::new(1.0, 1.0); 6];
        assert!(m.apply_power(6, &ones).unwrap().iter().all(|c| *c == ZERO));
        assert!(m.apply_power(1, &ones[..3]).is_err());
    }

    #[test]
    fn power_matches_repeated_application() {
        let (_, m, _) = kappa_one(12);
        let x: Vec<Complex64> = (0..12).map(|k| Complex64::new(k as f64, 1.0 - k as f64)).collect();
        let mut y = x.clone();
        for n in 0..8 {
            let direct = m.apply_power(n, &x).unwrap();
            for (a, b) in direct.iter().zip(&y) {
                assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
            }
            y = m.apply_power(1, &y).unwrap();
        }
    }

    #[test]
    fn adjoint_power_is_adjoint() {
        let (_, m, _) = kappa_one(10);
        let x: Vec<Complex64> = (0..10).map(|k| Complex64::new(0.3 * k as f64, 1.0)).collect();
        let y: Vec<Complex64> = (0..10).map(|k| Complex64::new(1.0, -0.2 * k as f64)).collect();
        for n in 0..5 {
            let tx = m.apply_power(n, &x).unwrap();
            let ty = m.apply_adjoint_power(n, &y).unwrap();
            let lhs: Complex64 = y.iter().zip(&tx).map(|(a, b)| a.conj() * b).sum();
            let rhs: Complex64 = ty.iter().zip(&x).map(|(a, b)| a.conj() * b).sum();
            assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn sigma_examples() {
        let (_, _, cov) = kappa_one(5);
        assert_abs_diff_eq!(cov.sigma[0], FRAC_1_SQRT_2, epsilon = 1e-15);
        for k in 1..5 {
            assert_abs_diff_eq!(cov.sigma[k], 1.0 / (k as f64 * 2f64.sqrt()), epsilon = 1e-15);
        }
        let f = make_analytic_field(Complex64::new(2.0, 0.0), 6).unwrap();
        let cov = sigma_from_field(&f, 12).unwrap();
        for k in 0..6 {
            assert_abs_diff_eq!(cov.sigma[k], 0.5f64.powi(k as i32) * FRAC_1_SQRT_2, epsilon = 1e-15);
        }
        let zero = EigenvectorField::from_coeffs(vec![ZERO; 4], 0.0).unwrap();
        assert!(sigma_from_field(&zero, 8).unwrap().sigma.iter().all(|s| *s == 0.0));
        assert!(sigma_from_field(&f, 4).is_err());
    }

    #[test]
    fn sigma_quadrature_matches_closed_form() {
        let f = make_weighted_shift_field(1.0, 16).unwrap();
        let closed = sigma_from_field(&f, 32).unwrap();
        let g = f.clone();
        let custom = EigenvectorField::custom(16, std::sync::Arc::new(move |l| g.eval_unchecked(l))).unwrap();
        let quad = sigma_from_field(&custom, 37).unwrap();
        for (a, b) in closed.sigma.iter().zip(&quad.sigma) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(closed.trace_r(), crate::field::field_norm_sq(&f), epsilon = 1e-14);
    }

    #[test]
    fn corr_linear_examples() {
        let (field, _, _) = kappa_one(40);
        for k in 1..10 {
            for n in 0..10 {
                let v = corr_linear(&field, &basis(40, k), &basis(40, k + n), n).unwrap();
                assert_abs_diff_eq!(v.re, 1.0 / (k * (k + n)) as f64, epsilon = 1e-14);
                assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-14);
            }
        }
        for n in 1..10 {
            let v = corr_linear(&field, &basis(40, 0), &basis(40, 0), n).unwrap();
            assert_abs_diff_eq!(v.norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn corr_linear_analytic_decay() {
        let f = make_analytic_field(Complex64::new(2.0, 0.0), 48).unwrap();
        let x: Vec<Complex64> = (0..48).map(|k| Complex64::new(0.5f64.powi(k), 0.0)).collect();
        let series = corr_linear_batch(&f, &x, &x, 12, None).unwrap();
        // direct series sum_q conj(x_q) c_q x_{q+n} conj(c_{q+n})
        for (n, v) in series.iter().enumerate() {
            let oracle: f64 = (0..48 - n)
                .map(|q| x[q].re * f.coeffs[q].re * x[q + n].re * f.coeffs[q + n].re)
                .sum();
            assert_abs_diff_eq!(v.re, oracle, epsilon = 1e-15);
        }
    }

    #[test]
    fn corr_linear_rejects_coarse_quadrature() {
        let (field, _, _) = kappa_one(8);
        let x = basis(8, 1);
        assert!(corr_linear_batch(&field, &x, &x, 4, Some(19)).is_err());
        assert!(corr_linear_batch(&field, &x, &x, 4, Some(20)).is_ok());
    }

    #[test]
    fn direct_route_examples() {
        let (_, model, cov) = kappa_one(8);
        for k in 0..8 {
            let v = corr_linear_direct(&model, &cov, &basis(8, k), &basis(8, k), 0).unwrap();
            assert_abs_diff_eq!(v.re, 2.0 * cov.sigma[k].powi(2), epsilon = 1e-15);
        }
        let ones = vec![Complex64::new(1.0, -1.0); 8];
        assert_eq!(corr_linear_direct(&model, &cov, &ones, &ones, 8).unwrap(), ZERO);
    }

    #[test]
    fn routes_agree_on_complex_analytic_field() {
        let spec = FieldSpec::Analytic { w: [1.2, 1.1], dim: 24 };
        let field = spec.build().unwrap();
        let model = make_operator(&spec).unwrap();
        let cov = sigma_from_field(&field, 48).unwrap();
        let x: Vec<Complex64> = (0..24).map(|k| Complex64::new((k as f64).sin(), 0.5)).collect();
        let y: Vec<Complex64> = (0..24).map(|k| Complex64::new(1.0, (k as f64).cos())).collect();
        let batch = corr_linear_batch(&field, &x, &y, 10, None).unwrap();
        for n in 0..=10 {
            let d = corr_linear_direct(&model, &cov, &x, &y, n).unwrap();
            assert!((batch[n] - d).norm() <= 1e-12 * d.norm().max(1e-3), "n={n}");
        }
    }

    #[test]
    fn eigen_residual_shift_fields() {
        for dim in [4usize, 10, 33] {
            let spec = FieldSpec::Analytic { w: [2.0, 0.0], dim };
            let field = spec.build().unwrap();
            let model = make_operator(&spec).unwrap();
            let r = eigen_residual(&model, &field, Complex64::from_polar(1.0, 0.4)).unwrap();
            assert_abs_diff_eq!(r, 2f64.powi(1 - dim as i32), epsilon = 1e-15);
            assert_abs_diff_eq!(r, shift_residual_closed_form(&field).unwrap(), epsilon = 1e-15);

            let spec = FieldSpec::WeightedShift { kappa: 1.0, dim };
            let field = spec.build().unwrap();
            let model = make_operator(&spec).unwrap();
            let r = eigen_residual(&model, &field, Complex64::from_polar(1.0, 2.0)).unwrap();
            assert_abs_diff_eq!(r, 1.0 / (dim - 1) as f64, epsilon = 1e-14);
            assert!(r <= field.coeffs[dim - 1].re * model.max_weight());
        }
    }

    #[test]
    fn kalisch_residual_shrinks() {
        let lam = Complex64::from_polar(1.0, 2.0);
        let mut prev = f64::INFINITY;
        for dim in [17, 65, 257] {
            let spec = FieldSpec::Kalisch { dim };
            let field = make_kalisch_field(dim).unwrap();
            let model = make_operator(&spec).unwrap();
            let r = eigen_residual(&model, &field, lam).unwrap();
            assert!(r < prev, "dim {dim}: {r}");
            prev = r;
        }
        assert!(prev < 0.2);
    }

    #[test]
    fn nilpotency_warning_threshold() {
        assert!(nilpotency_warning(64, 16).is_none());
        assert!(nilpotency_warning(64, 17).is_some());
    }
}
