//! Invariant suites run by `mixlab verify`. Each check asserts `lhs <= rhs`.

use mixlab::chaos::{
    hermite, monomial_corr, monomial_variance, permanent_naive, permanent_ryser, random_observable, SignedIndex,
    WickMonomial,
};
use mixlab::correlate::{bound_suite, corr_mc, norm_sq_correlation, weighted_power_sums, BoundConstants, BoundKind, Means};
use mixlab::measure::moment_mc;
use mixlab::model::{eigen_residual, shift_residual_closed_form};
use mixlab::{Complex64, CovarianceModel, GaussianSampler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::commands::Context;

/// Sampler streams used by the suites; `correlate` uses stream `n` for lag `n`.
const MOMENT_STREAM: u64 = 1 << 32;
const NORM_SQ_STREAM: u64 = 2 << 32;
const HERMITE_STREAM: u64 = 3 << 32;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Suite {
    pub name: String,
    pub checks: Vec<Check>,
}

impl Suite {
    fn new(name: &str) -> Self {
        Suite { name: name.to_string(), checks: Vec::new() }
    }

    fn le(&mut self, name: impl Into<String>, lhs: f64, rhs: f64) {
        self.checks.push(Check { name: name.into(), lhs, rhs, pass: lhs <= rhs });
    }

    pub fn min_margin(&self) -> f64 {
        self.checks.iter().map(|c| c.rhs - c.lhs).fold(f64::INFINITY, f64::min)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

pub fn run_all(ctx: &Context) -> anyhow::Result<Vec<Suite>> {
    let (tmin, tmax, grid) = ctx.cfg.holder.resolve(ctx.dim());
    let (mut consts, _) = BoundConstants::estimate(&ctx.field, tmin, tmax, grid)?;
    consts.e_norm_sq = ctx.e_norm_sq;
    Ok(vec![
        moments(ctx)?,
        power_sums(ctx, &consts),
        norm_sq_chain(ctx, &consts)?,
        bounds(ctx, &consts)?,
        permanents(ctx)?,
        hermite_identities(ctx)?,
        eigen(ctx)?,
    ])
}

fn moments(ctx: &Context) -> anyhow::Result<Suite> {
    let mut s = Suite::new("moments");
    let sampler = GaussianSampler::new(ctx.cov.clone(), ctx.seed, MOMENT_STREAM);
    let count = ctx.cfg.verify.moment_samples;
    let s2: f64 = ctx.cov.sigma.iter().map(|v| v * v).sum();
    let s4: f64 = ctx.cov.sigma.iter().map(|v| v.powi(4)).sum();
    let exact = [2.0 * s2, 4.0 * s2 * s2 + 4.0 * s4];
    for k in 1..=4u32 {
        let m = moment_mc(&sampler, count, k)?;
        let bound = factorial(k as usize) * ctx.e_norm_sq.powi(k as i32);
        s.le(format!("moment k={k} - 4 se <= k! ||E||^2k"), m.estimate - 4.0 * m.stderr, bound);
        if let Some(x) = exact.get(k as usize - 1) {
            s.le(format!("|moment k={k} - exact| <= 4 se"), (m.estimate - x).abs(), 4.0 * m.stderr);
        }
    }
    Ok(s)
}

fn power_sums(ctx: &Context, c: &BoundConstants) -> Suite {
    let mut s = Suite::new("power_sums");
    let half = ctx.e_norm_sq / 2.0;
    let tol = 1e-10 * half.max(1.0);
    let top = ctx.cfg.verify.max_power_lag.min(ctx.dim());
    for n in 0..=top {
        let p = weighted_power_sums(&ctx.model, &ctx.cov, n);
        s.le(format!("s2(n={n}) <= ||E||^2/2"), p.s2, half + tol);
        if n == 0 {
            s.le("|s2(0) - ||E||^2/2|", (p.s2 - half).abs(), tol);
        } else {
            let b = c.decay_constant().powi(2) * ctx.e_norm_sq / (4.0 * (n as f64).powf(2.0 * c.alpha));
            s.le(format!("s4(n={n}) <= rate bound"), p.s4, b);
        }
    }
    s
}

fn norm_sq_chain(ctx: &Context, c: &BoundConstants) -> anyhow::Result<Suite> {
    let mut s = Suite::new("norm_sq_chain");
    let nsq = |z: &[Complex64]| z.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let mean0 = 2.0 * weighted_power_sums(&ctx.model, &ctx.cov, 0).s2;
    for n in [1usize, 2, 4, 8, 16].into_iter().filter(|&n| n < ctx.dim()) {
        let sampler = GaussianSampler::new(ctx.cov.clone(), ctx.seed, NORM_SQ_STREAM + n as u64);
        let mean_n = 2.0 * weighted_power_sums(&ctx.model, &ctx.cov, n).s2;
        let e = corr_mc(&nsq, &nsq, &ctx.model, &sampler, n, ctx.cfg.verify.corr_samples, Means::Analytic { f: mean_n, g: mean0 })?;
        let exact = norm_sq_correlation(&ctx.model, &ctx.cov, n);
        s.le(format!("|mc - closed form| at n={n} <= 4 se"), (e.estimate - exact).abs(), 4.0 * e.stderr);
    }
    for n in 1..=ctx.cfg.verify.max_power_lag {
        let v = norm_sq_correlation(&ctx.model, &ctx.cov, n);
        s.le(format!("-I_n(|.|^2,|.|^2) at n={n} <= 0"), -v, 0.0);
        let b = c.decay_constant().powi(2) * ctx.e_norm_sq / (n as f64).powf(2.0 * c.alpha);
        s.le(format!("I_n(|.|^2,|.|^2) at n={n} <= rate bound"), v, b);
    }
    Ok(s)
}

fn bounds(ctx: &Context, c: &BoundConstants) -> anyhow::Result<Suite> {
    let mut s = Suite::new("bound_suite");
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0xb0_0d5);
    let coords = ctx.dim().min(8);
    for i in 0..ctx.cfg.verify.bound_pairs {
        let f = random_observable(&mut rng, coords, 4, 3);
        let g = random_observable(&mut rng, coords, 4, 3);
        let rep = bound_suite(&f, &g, c, &ctx.model, &ctx.cov, &ctx.cfg.verify.bound_lags)?;
        for r in rep.rows.iter().filter(|r| r.bound.is_finite()) {
            let what = match r.kind {
                BoundKind::Degree(k) => format!("degree {k}"),
                BoundKind::Aggregate => "aggregate".to_string(),
            };
            s.le(format!("pair {i} n={} {what}", r.n), r.value.abs(), r.bound);
        }
    }
    Ok(s)
}

fn permanents(ctx: &Context) -> anyhow::Result<Suite> {
    let mut s = Suite::new("permanent");
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x9e57);
    for k in 1..=8usize {
        for rep in 0..3 {
            let m: Vec<f64> = (0..k * k).map(|_| rng.random_range(-3i32..=3) as f64).collect();
            let d = (permanent_naive(&m, k) - permanent_ryser(&m, k)).abs();
            s.le(format!("|naive - ryser| k={k} #{rep}"), d, 0.0);
        }
    }
    let coords = ctx.dim().min(4);
    for rep in 0..20 {
        let deg = rng.random_range(1..=5usize);
        let idx: Vec<SignedIndex> = (0..deg)
            .map(|_| {
                let c = rng.random_range(0..coords);
                if rng.random_bool(0.5) { SignedIndex::re(c) } else { SignedIndex::im(c) }
            })
            .collect();
        let a = WickMonomial::new(idx);
        let d = (monomial_corr(&a, &a, &ctx.model, &ctx.cov, 0)? - monomial_variance(&a, &ctx.cov)).abs();
        s.le(format!("|corr at lag 0 - variance| #{rep}"), d, 0.0);
    }
    Ok(s)
}

fn hermite_identities(ctx: &Context) -> anyhow::Result<Suite> {
    let mut s = Suite::new("hermite");
    for t in [-2.5, -1.0, 0.0, 0.3, 1.7, 3.0] {
        let explicit: [f64; 3] = [t * t - 1.0, t * t * t - 3.0 * t, t.powi(4) - 6.0 * t * t + 3.0];
        for (j, e) in explicit.iter().enumerate() {
            let d = (hermite(j + 2, t) - e).abs();
            s.le(format!("He_{}({t}) explicit form", j + 2), d, 1e-12 * e.abs().max(1.0));
        }
    }
    let sigma = ctx.cov.sigma[0];
    let sampler = GaussianSampler::new(CovarianceModel::new(vec![sigma])?, ctx.seed, HERMITE_STREAM);
    let ys = sampler.map_draws(ctx.cfg.verify.moment_samples, |z| z[0].re / sigma);
    for j in 1..=4usize {
        for k in j..=4usize {
            let vals: Vec<f64> = ys.iter().map(|&y| hermite(j, y) * hermite(k, y)).collect();
            let (mean, se) = mean_se(&vals);
            let exact = if j == k { factorial(k) } else { 0.0 };
            s.le(format!("E He_{j} He_{k}"), (mean - exact).abs(), 4.0 * se);
        }
    }
    Ok(s)
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn eigen(ctx: &Context) -> anyhow::Result<Suite> {
    let mut s = Suite::new("eigen_residual");
    if let Some(closed) = shift_residual_closed_form(&ctx.field) {
        for theta in [0.1, 1.0, 2.5] {
            let r = eigen_residual(&ctx.model, &ctx.field, Complex64::from_polar(1.0, theta))?;
            s.le(format!("|residual - closed form| theta={theta}"), (r - closed).abs(), 1e-12 * closed.max(1.0));
        }
    }
    Ok(s)
}
