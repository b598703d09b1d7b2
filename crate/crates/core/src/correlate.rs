//! Correlation series, decay fits, bound suites and the slow-mixing witness.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chaos::{chaos_corr_by_degree, multilinear_norm, symmetrize, x_norm, y_norm, ChaosObservable};
use crate::error::{invalid, Error, Result};
use crate::field::{field_norm_sq, holder_estimate, EigenvectorField, HolderFit};
use crate::measure::GaussianSampler;
use crate::model::{corr_linear_batch, corr_linear_direct, CovarianceModel, OperatorModel, Transfer};
use crate::tolerances::{FIT_FLOOR, FIT_MIN_POINTS, HOLDER_INFLATION, MC_BATCHES, MIN_CORR_SAMPLES};
use crate::util::{batch_means, factorial, linear_fit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Spectral,
    Chaos,
    Mc,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Spectral => "spectral",
            Route::Chaos => "chaos",
            Route::Mc => "mc",
        }
    }
}

impl std::str::FromStr for Route {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "spectral" => Ok(Route::Spectral),
            "chaos" => Ok(Route::Chaos),
            "mc" => Ok(Route::Mc),
            other => invalid(format!("unknown route '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub n: usize,
    pub value: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub imag: f64,
    pub stderr: Option<f64>,
    pub route: Route,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl SeriesEntry {
    pub fn magnitude(&self) -> f64 {
        self.value.hypot(self.imag)
    }
}

/// `n -> I_n(f, g)` from one route.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub field: String,
    pub observables: String,
    entries: Vec<SeriesEntry>,
}

impl CorrelationSeries {
    pub fn new(field: impl Into<String>, observables: impl Into<String>) -> Self {
        CorrelationSeries { field: field.into(), observables: observables.into(), entries: Vec::new() }
    }

    pub fn push(&mut self, e: SeriesEntry) -> Result<()> {
        if self.entries.last().is_some_and(|l| l.n >= e.n) {
            return invalid("series lags must be strictly increasing");
        }
        if e.stderr.is_some() != (e.route == Route::Mc) {
            return invalid("stderr is present exactly for Monte Carlo entries");
        }
        self.entries.push(e);
        Ok(())
    }

    pub fn entries(&self) -> &[SeriesEntry] {
        &self.entries
    }

    /// Columns `n,value,stderr,route`; the real part is written for complex values.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,value,stderr,route\n");
        for e in &self.entries {
            let se = e.stderr.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", e.n, e.value, se, e.route.as_str());
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    Power,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    /// `-alpha` for power fits, `ln t` for exponential fits.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_range: (usize, usize),
    pub points: usize,
}

/// Least squares of `log |I_n|` against `log n` or `n` on `n_min..=n_max`.
pub fn fit_decay(series: &CorrelationSeries, model: DecayModel, n_min: usize, n_max: usize) -> Result<DecayFit> {
    let pts: Vec<(usize, f64)> = series.entries().iter().map(|e| (e.n, e.magnitude())).collect();
    fit_decay_points(&pts, model, n_min, n_max)
}

pub fn fit_decay_points(pts: &[(usize, f64)], model: DecayModel, n_min: usize, n_max: usize) -> Result<DecayFit> {
    let in_range: Vec<(usize, f64)> =
        pts.iter().copied().filter(|&(n, _)| n >= n_min && n <= n_max && (model == DecayModel::Exponential || n > 0)).collect();
    let usable: Vec<(usize, f64)> = in_range.iter().copied().filter(|&(_, v)| v > FIT_FLOOR).collect();
    if usable.is_empty() && !in_range.is_empty() {
        return Err(Error::NoSignal(format!("all values in [{n_min}, {n_max}] are below {FIT_FLOOR}")));
    }
    if usable.len() < FIT_MIN_POINTS {
        return invalid(format!("decay fit needs {FIT_MIN_POINTS} usable points, got {}", usable.len()));
    }
    let xs: Vec<f64> = usable
        .iter()
        .map(|&(n, _)| match model {
            DecayModel::Power => (n as f64).ln(),
            DecayModel::Exponential => n as f64,
        })
        .collect();
    let ys: Vec<f64> = usable.iter().map(|&(_, v)| v.ln()).collect();
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    Ok(DecayFit { model, slope, intercept, r_squared, n_range: (n_min, n_max), points: usable.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Means were estimated from the same draws rather than supplied.
    pub plug_in_means: bool,
}

/// Centering used by [`corr_mc`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Means {
    /// Known `int f o T^n dm` and `int g dm`.
    Analytic { f: f64, g: f64 },
    PlugIn,
}

pub type PointFn<'a> = &'a (dyn Fn(&[Complex64]) -> f64 + Sync);

/// Monte Carlo `int f(T^n x) g(x) dm - int f dm int g dm` with batch-means error.
pub fn corr_mc(
    f: PointFn<'_>,
    g: PointFn<'_>,
    model: &OperatorModel,
    sampler: &GaussianSampler,
    n: usize,
    n_samples: usize,
    means: Means,
) -> Result<McEstimate> {
    if n_samples < MIN_CORR_SAMPLES {
        return invalid(format!("need at least {MIN_CORR_SAMPLES} samples, got {n_samples}"));
    }
    if sampler.dim() != model.dim {
        return invalid("sampler and operator dimensions differ");
    }
    let transfer = model.transfer(n);
    let pairs: Vec<(f64, f64)> = sampler
        .map_blocks(n_samples, |_, set| {
            let mut buf = vec![Complex64::default(); set.dim];
            set.rows()
                .map(|x| {
                    transfer.apply_into(x, &mut buf);
                    (f(&buf), g(x))
                })
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();
    let (mf, mg, plug) = match means {
        Means::Analytic { f, g } => (f, g, false),
        Means::PlugIn => {
            let s = pairs.len() as f64;
            (pairs.iter().map(|p| p.0).sum::<f64>() / s, pairs.iter().map(|p| p.1).sum::<f64>() / s, true)
        }
    };
    let vals: Vec<f64> = pairs.iter().map(|(a, b)| (a - mf) * (b - mg)).collect();
    let (estimate, stderr, _) = batch_means(&vals, MC_BATCHES);
    Ok(McEstimate { estimate, stderr, plug_in_means: plug })
}

/// `I_n(||.||^2, ||.||^2) = sum_{k,l} |<R T*^n e_k, e_l>|^2 = sum_l 4 sigma_l^4 ||T^n e_l||^2`.
pub fn norm_sq_correlation(model: &OperatorModel, cov: &CovarianceModel, n: usize) -> f64 {
    4.0 * weighted_power_sums(model, cov, n).s4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSums {
    /// `sum_k sigma_k^4 ||T^n e_k||^2`.
    pub s4: f64,
    /// `sum_k sigma_k^2 ||T^n e_k||^2`.
    pub s2: f64,
}

pub fn weighted_power_sums(model: &OperatorModel, cov: &CovarianceModel, n: usize) -> PowerSums {
    let t = model.transfer(n);
    let (mut s4, mut s2) = (0.0, 0.0);
    for (k, s) in cov.sigma.iter().enumerate() {
        let c = t.column_norm_sq(k);
        let s_sq = s * s;
        s2 += s_sq * c;
        s4 += s_sq * s_sq * c;
    }
    PowerSums { s4, s2 }
}

/// `E ||T^n x||^2 = 2 s2(n)`.
pub fn mean_norm_sq_after(model: &OperatorModel, cov: &CovarianceModel, n: usize) -> f64 {
    2.0 * weighted_power_sums(model, cov, n).s2
}

/// Complex functional `f(x) = sum_k a_k x_k` with `I_n(conj f, f) = r^n` in the limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowWitness {
    pub r: f64,
    pub k: usize,
    /// `a_k`, zero past `k`.
    pub coeffs: Vec<Complex64>,
    /// Allowance for floating-point error in the computed series.
    pub rounding: f64,
}

/// `a_k = sqrt(1 - r^2) r^k / c_k` for `k = 0..=K`.
pub fn slow_witness(field: &EigenvectorField, r: f64, k: usize) -> Result<SlowWitness> {
    if !field.is_monomial() {
        return invalid("the witness needs a monomial field");
    }
    if !(0.0..1.0).contains(&r) {
        return invalid(format!("r must lie in [0, 1), got {r}"));
    }
    if k >= field.dim {
        return invalid(format!("K = {k} must be below dim = {}", field.dim));
    }
    let amp = (1.0 - r * r).sqrt();
    let mut coeffs = vec![Complex64::default(); field.dim];
    for (j, a) in coeffs.iter_mut().enumerate().take(k + 1) {
        let c = field.coeffs[j];
        if c.norm() == 0.0 {
            return invalid(format!("c_{j} vanishes; the field cannot carry the witness"));
        }
        *a = amp * r.powi(j as i32) / c;
    }
    let g_max = amp / (1.0 - r);
    let rounding = 16.0 * f64::EPSILON * (k + 1) as f64 * g_max * g_max;
    Ok(SlowWitness { r, k, coeffs, rounding })
}

impl SlowWitness {
    pub fn predicted(&self, n: usize) -> f64 {
        self.r.powi(n as i32)
    }

    /// Exact value for the truncated functional: `r^n (1 - r^{2(K - n + 1)})`.
    pub fn truncated(&self, n: usize) -> f64 {
        if n > self.k {
            return 0.0;
        }
        self.r.powi(n as i32) * (1.0 - self.r.powi(2 * (self.k - n + 1) as i32))
    }

    /// Bound on `|predicted(n) - computed(n)|`: truncation deficit plus rounding.
    pub fn tail_bound(&self, n: usize) -> f64 {
        let deficit = if n <= self.k { self.r.powi((2 * (self.k + 1) - n) as i32) } else { self.predicted(n) };
        deficit + self.rounding
    }

    /// `sum_k |a_k|^2 sigma_k^2`.
    pub fn summability(&self, cov: &CovarianceModel) -> f64 {
        self.coeffs.iter().zip(&cov.sigma).map(|(a, s)| a.norm_sqr() * s * s).sum()
    }

    fn conj_coeffs(&self) -> Vec<Complex64> {
        self.coeffs.iter().map(|c| c.conj()).collect()
    }

    /// `I_n(conj f, f) = conj <R T*^n conj(a), conj(a)>` for `n = 0..=n_max`, spectral route.
    pub fn spectral_series(&self, field: &EigenvectorField, n_max: usize) -> Result<Vec<Complex64>> {
        let v = self.conj_coeffs();
        Ok(corr_linear_batch(field, &v, &v, n_max, None)?.iter().map(|c| c.conj()).collect())
    }

    pub fn direct(&self, model: &OperatorModel, cov: &CovarianceModel, n: usize) -> Result<Complex64> {
        let v = self.conj_coeffs();
        Ok(corr_linear_direct(model, cov, &v, &v, n)?.conj())
    }
}

/// Smallest `r` with `r^{n_max} >= n_max^{-beta}`.
pub fn refutation_radius(beta: f64, n_max: usize) -> f64 {
    (n_max as f64).powf(-beta / n_max as f64)
}

/// Hoelder data entering the decay bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub alpha: f64,
    /// Hoelder constant, already inflated when estimated.
    pub c_e: f64,
    pub e_norm_sq: f64,
}

impl BoundConstants {
    /// Fit `(alpha, C(E))` on `[theta_min, theta_max]` and inflate the constant.
    pub fn estimate(field: &EigenvectorField, theta_min: f64, theta_max: f64, grid: usize) -> Result<(Self, HolderFit)> {
        let fit = holder_estimate(field, theta_min, theta_max, grid)?;
        Ok((Self::from_fit(&fit, field_norm_sq(field)), fit))
    }

    pub fn from_fit(fit: &HolderFit, e_norm_sq: f64) -> Self {
        BoundConstants { alpha: fit.alpha_hat.min(1.0), c_e: HOLDER_INFLATION * fit.c_hat, e_norm_sq }
    }

    /// `C(E) pi^alpha`.
    pub fn decay_constant(&self) -> f64 {
        self.c_e * PI.powf(self.alpha)
    }

    /// `C'(E) = C(E) pi^alpha (sum_{k >= 1} ||E||^{4k - 2})^{1/2}`, finite for `||E|| < 1`.
    pub fn aggregate_constant(&self) -> Option<f64> {
        let q = self.e_norm_sq;
        (q < 1.0).then(|| self.decay_constant() * (q / (1.0 - q * q)).sqrt())
    }

    /// Rate bound of one chaos level: `k! C pi^a ||E||^{2k-1} ||B_f|| ||B_g|| / n^a`.
    pub fn degree_bound(&self, k: usize, bf: f64, bg: f64, n: usize) -> f64 {
        factorial(k) * self.decay_constant() * self.e_norm_sq.sqrt().powi(2 * k as i32 - 1) * bf * bg
            / (n as f64).powf(self.alpha)
    }

    /// Constants after replacing `E` by `s E`.
    pub fn scaled(&self, s: f64) -> Self {
        BoundConstants { alpha: self.alpha, c_e: self.c_e * s, e_norm_sq: self.e_norm_sq * s * s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "degree")]
pub enum BoundKind {
    Degree(usize),
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n: usize,
    pub kind: BoundKind,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    /// Scale `s` applied to the field for the aggregate rows when `||E||_2 >= 1`.
    pub aggregate_scale: Option<f64>,
    /// `max_n |I_n(f, g)| n^alpha / (||f|| ||g||)` over the tested lags.
    pub empirical_c_n: f64,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass).count()
    }
}

/// `||E'||_2^2` used for the aggregate rows when the field has to be rescaled.
pub const AGGREGATE_NORM_SQ: f64 = 0.5;

/// Check the per-degree and aggregate rate inequalities on every lag in `n_list`.
pub fn bound_suite(
    f: &ChaosObservable,
    g: &ChaosObservable,
    constants: &BoundConstants,
    model: &OperatorModel,
    cov: &CovarianceModel,
    n_list: &[usize],
) -> Result<BoundReport> {
    let (sf, sg) = (symmetrize(f), symmetrize(g));
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let fl2 = (f.l2_norm_sq(cov) - f.degree0 * f.degree0).max(0.0).sqrt();
    let gl2 = (g.l2_norm_sq(cov) - g.degree0 * g.degree0).max(0.0).sqrt();
    let mut c_n: f64 = 0.0;

    let (agg_consts, agg_cov, scale) = if constants.e_norm_sq < 1.0 {
        (*constants, cov.clone(), None)
    } else {
        let s = (AGGREGATE_NORM_SQ / constants.e_norm_sq).sqrt();
        notes.push(format!(
            "||E||_2^2 = {:.6} >= 1: aggregate rows use the field scaled by {s:.6}",
            constants.e_norm_sq
        ));
        (constants.scaled(s), cov.scaled(s), Some(s))
    };
    let c_agg = agg_consts.aggregate_constant().expect("scaled field has norm below one");
    let (fx, gy) = (x_norm(f, &agg_cov), y_norm(g, &agg_cov));
    let upper: std::collections::BTreeMap<usize, (f64, f64)> = f
        .degrees()
        .into_iter()
        .filter(|k| g.degrees().contains(k))
        .map(|k| (k, (multilinear_norm(&sf, k).upper, multilinear_norm(&sg, k).upper)))
        .collect();

    for &n in n_list {
        let by_degree = chaos_corr_by_degree(f, g, model, cov, n)?;
        let total: f64 = by_degree.iter().map(|(_, v)| v).sum();
        for (k, v) in by_degree {
            let bound = if n == 0 {
                f64::INFINITY
            } else {
                let (bf, bg) = upper[&k];
                constants.degree_bound(k, bf, bg, n)
            };
            rows.push(row(n, BoundKind::Degree(k), v, bound));
        }
        if n > 0 {
            if fl2 > 0.0 && gl2 > 0.0 {
                c_n = c_n.max(total.abs() * (n as f64).powf(constants.alpha) / (fl2 * gl2));
            }
            let agg = if scale.is_some() {
                chaos_corr_by_degree(f, g, model, &agg_cov, n)?.iter().map(|(_, v)| v).sum()
            } else {
                total
            };
            let bound = c_agg * fx * gy / (n as f64).powf(constants.alpha);
            rows.push(row(n, BoundKind::Aggregate, agg, bound));
        }
    }
    Ok(BoundReport { rows, aggregate_scale: scale, empirical_c_n: c_n, notes })
}

fn row(n: usize, kind: BoundKind, value: f64, bound: f64) -> BoundRow {
    let margin = bound - value.abs();
    BoundRow { n, kind, value, bound, margin, pass: margin >= 0.0 }
}

/// `x -> exp(tau ||x||^2)` for `tau` below `(2 ||E||_2^2)^{-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpTypeObservable {
    pub tau: f64,
    /// `prod_{k < dim} (1 - 4 tau sigma_k^2)^{-1}`, the truncated `int e^{2 tau ||x||^2} dm`.
    pub certificate: f64,
    /// Bound on the factor contributed by coordinates past the truncation.
    pub tail_factor: f64,
    /// `int e^{tau ||x||^2} dm` on the truncated model.
    pub mean: f64,
}

pub fn exp_type_observable(
    tau: f64,
    cov: &CovarianceModel,
    field_norm_sq: f64,
    tail_bound: f64,
) -> Result<ExpTypeObservable> {
    let threshold = 1.0 / (2.0 * field_norm_sq);
    if !(tau >= 0.0) {
        return invalid(format!("tau must be nonnegative, got {tau}"));
    }
    if tau >= threshold {
        return invalid(format!(
            "tau = {tau} violates the exponential type condition tau < (2 ||E||_2^2)^-1 = {threshold}"
        ));
    }
    let mut cert = 1.0;
    let mut mean = 1.0;
    for s in &cov.sigma {
        cert /= 1.0 - 4.0 * tau * s * s;
        mean /= 1.0 - 2.0 * tau * s * s;
    }
    let u = 2.0 * tau * tail_bound;
    let tail_factor = if u < 1.0 { (u / (1.0 - u)).exp() } else { f64::INFINITY };
    Ok(ExpTypeObservable { tau, certificate: cert, tail_factor, mean })
}

impl ExpTypeObservable {
    pub fn eval(&self, z: &[Complex64]) -> f64 {
        (self.tau * z.iter().map(|c| c.norm_sqr()).sum::<f64>()).exp()
    }

    /// `int e^{tau ||T^n x||^2} dm` for shift models.
    pub fn mean_after(&self, model: &OperatorModel, cov: &CovarianceModel, n: usize) -> Option<f64> {
        let Transfer::Shift { n, pw } = model.transfer(n) else {
            return None;
        };
        Some(pw.iter().enumerate().fold(1.0, |acc, (k, p)| {
            acc / (1.0 - 2.0 * self.tau * p.norm_sqr() * cov.sigma[k + n].powi(2))
        }))
    }
}

/// `x -> phi(||x||^2)` with `phi(t) = sum_k a_k t^k / k!`, a finite series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntireNormObservable {
    pub coeffs: Vec<f64>,
    /// `max_k (|a_k| / k!)^{1/k}`, the exponential type of the truncated series.
    pub type_estimate: f64,
}

impl EntireNormObservable {
    pub fn new(coeffs: Vec<f64>, field_norm_sq: f64) -> Result<Self> {
        let t = coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, a)| (a.abs() / factorial(k)).powf(1.0 / k as f64))
            .fold(0.0, f64::max);
        if t >= 1.0 / (2.0 * field_norm_sq) {
            return invalid(format!("series type {t} violates tau < (2 ||E||_2^2)^-1"));
        }
        Ok(EntireNormObservable { coeffs, type_estimate: t })
    }

    pub fn eval(&self, z: &[Complex64]) -> f64 {
        let t: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        let mut p = 1.0;
        let mut s = 0.0;
        for (k, a) in self.coeffs.iter().enumerate() {
            s += a * p / factorial(k);
            p *= t;
        }
        s
    }
}
