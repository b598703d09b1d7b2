//! `field-info`, `correlate` and `verify`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context as _};
use mixlab::correlate::{
    corr_mc, fit_decay, slow_witness, DecayModel, Means, Route, SeriesEntry,
};
use mixlab::field::{default_quad_nodes, field_norm_sq, field_norm_sq_with, holder_estimate, pairwise_gap};
use mixlab::model::{
    corr_linear_batch, eigen_residual, make_operator, nilpotency_warning, shift_residual_closed_form,
    sigma_from_field,
};
use mixlab::{chaos::chaos_corr, CorrelationSeries, Complex64, CovarianceModel, EigenvectorField, OperatorModel};
use serde_json::json;

use crate::config::{ExperimentConfig, ResolvedObservable};
use crate::run::RunDir;
use crate::verify;

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

/// Everything derived from a config before a command runs.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub field: EigenvectorField,
    pub model: OperatorModel,
    pub cov: CovarianceModel,
    pub e_norm_sq: f64,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, seed: u64, out: PathBuf) -> anyhow::Result<Self> {
        let field = cfg.field.build().context("building the field")?;
        let model = make_operator(&cfg.field)?;
        let dim = field.dim;
        let nodes = cfg.quad_nodes.unwrap_or_else(|| default_quad_nodes(dim));
        let cov = sigma_from_field(&field, nodes)?.scaled(cfg.sigma_scale);
        let e_norm_sq = match cfg.quad_nodes {
            Some(m) => field_norm_sq_with(&field, m),
            None => field_norm_sq(&field),
        };
        Ok(Context { cfg, seed, out, field, model, cov, e_norm_sq })
    }

    pub fn dim(&self) -> usize {
        self.field.dim
    }

    pub fn run_dir(&self, command: &str) -> anyhow::Result<RunDir> {
        RunDir::create(&self.out, command, &self.cfg, self.seed)
    }
}

pub fn field_info(ctx: &Context) -> anyhow::Result<Outcome> {
    let field = &ctx.field;
    let (tmin, tmax, grid) = ctx.cfg.holder.resolve(ctx.dim());
    let fit = holder_estimate(field, tmin, tmax, grid)?;
    let gaps: Vec<_> = [0.1, 0.5, 1.0, PI]
        .iter()
        .map(|&t| json!({ "theta": t, "gap": pairwise_gap(field, t) }))
        .collect();
    let theta = 0.3;
    let residual = eigen_residual(&ctx.model, field, Complex64::from_polar(1.0, theta))?;
    let report = json!({
        "field": ctx.cfg.field,
        "dim": field.dim,
        "kind": field.kind,
        "norm_sq": ctx.e_norm_sq,
        "tail_bound": field.tail_bound,
        "holder": { "alpha_hat": fit.alpha_hat, "c_hat": fit.c_hat, "r_squared": fit.r_squared,
                    "theta_min": tmin, "theta_max": tmax, "grid": grid },
        "gap_table": gaps,
        "eigen_residual": { "theta": theta, "value": residual,
                            "closed_form": shift_residual_closed_form(field) },
    });
    println!("field      {}", serde_json::to_string(&ctx.cfg.field)?);
    println!("norm_sq    {:.6}", ctx.e_norm_sq);
    println!("alpha_hat  {:.4}  (c_hat {:.4}, r2 {:.5}, theta in [{tmin:.3e}, {tmax:.3e}])", fit.alpha_hat, fit.c_hat, fit.r_squared);
    println!("residual   {residual:.3e} at theta = {theta}");
    let mut run = ctx.run_dir("field-info")?;
    run.write_json("field_info.json", &report)?;
    run.check("field_norm");
    run.check("holder_fit");
    run.check("pairwise_gap");
    run.check("eigen_residual");
    let path = run.finish()?;
    println!("wrote {}", path.display());
    Ok(Outcome::Pass)
}

fn default_routes(f: &ResolvedObservable, g: &ResolvedObservable) -> Vec<Route> {
    let mut r = Vec::new();
    if f.linear.is_some() && g.linear.is_some() {
        r.push(Route::Spectral);
    }
    r.extend([Route::Chaos, Route::Mc]);
    r
}

pub fn correlate(ctx: &Context) -> anyhow::Result<Outcome> {
    let cfg = &ctx.cfg;
    let dim = ctx.dim();
    let lags = cfg.n.as_ref().map(|n| n.resolve()).transpose()?.unwrap_or_else(|| (1..=64).collect());
    if cfg.observables.is_none() && cfg.witness.is_none() {
        bail!("correlate needs observables or a witness in the config");
    }
    if let Some(&worst) = lags.iter().rev().find(|&&n| nilpotency_warning(dim, n).is_some()) {
        eprintln!("warning: {}", nilpotency_warning(dim, worst).unwrap_or_default());
    }
    let mut run = ctx.run_dir("correlate")?;
    let n_max = *lags.last().expect("lag list is nonempty");

    if let Some(pair) = &cfg.observables {
        let f = pair.f.resolve(dim, &ctx.cov)?;
        let g = pair.g.resolve(dim, &ctx.cov)?;
        let routes = cfg.routes.clone().unwrap_or_else(|| default_routes(&f, &g));
        if routes.is_empty() {
            bail!("no routes requested");
        }
        if routes.contains(&Route::Spectral) && (f.linear.is_none() || g.linear.is_none()) {
            bail!("route 'spectral' needs linear observables; got {} and {}", f.label, g.label);
        }
        let name = format!("{}|{}", f.label, g.label);
        let field_name = serde_json::to_string(&cfg.field)?;
        let mut all: BTreeMap<&'static str, CorrelationSeries> = BTreeMap::new();
        for route in &routes {
            let mut s = CorrelationSeries::new(field_name.clone(), name.clone());
            match route {
                Route::Spectral => {
                    let (u, v) = (f.linear.as_ref().unwrap(), g.linear.as_ref().unwrap());
                    let vals = corr_linear_batch(&ctx.field, u, v, n_max, cfg.quad_nodes)?;
                    for &n in &lags {
                        s.push(SeriesEntry { n, value: 0.5 * vals[n].re, imag: 0.0, stderr: None, route: *route })?;
                    }
                }
                Route::Chaos => {
                    for &n in &lags {
                        let value = chaos_corr(&f.chaos, &g.chaos, &ctx.model, &ctx.cov, n)?;
                        s.push(SeriesEntry { n, value, imag: 0.0, stderr: None, route: *route })?;
                    }
                }
                Route::Mc => {
                    let cf = f.chaos.compile(&ctx.cov)?;
                    let cg = g.chaos.compile(&ctx.cov)?;
                    let fe = |z: &[Complex64]| cf.eval(z);
                    let ge = |z: &[Complex64]| cg.eval(z);
                    let means = Means::Analytic { f: cf.mean(), g: cg.mean() };
                    let reach = f.chaos.max_coord().unwrap_or(0) + n_max;
                    if f.chaos.max_degree() > 1 && reach >= dim {
                        eprintln!("warning: f uses coordinates that leave the truncation by n = {n_max}; mc and chaos may differ");
                    }
                    for &n in &lags {
                        let sampler = mixlab::GaussianSampler::new(ctx.cov.clone(), ctx.seed, n as u64);
                        let e = corr_mc(&fe, &ge, &ctx.model, &sampler, n, cfg.samples, means)?;
                        s.push(SeriesEntry { n, value: e.estimate, imag: 0.0, stderr: Some(e.stderr), route: *route })?;
                    }
                }
            }
            run.write(&format!("series_{}.csv", route.as_str()), s.to_csv().as_bytes())?;
            run.write_json(&format!("series_{}.json", route.as_str()), &s)?;
            run.check(format!("route_{}", route.as_str()));
            all.insert(route.as_str(), s);
        }
        let agreement = agreement_table(&all);
        println!("{:<18} {:>14} {:>12}", "routes", "max |diff|", "max z");
        for row in &agreement {
            let z = row.max_z.map(|z| format!("{z:.3}")).unwrap_or_else(|| "-".into());
            println!("{:<18} {:>14.6e} {:>12}", row.pair, row.max_abs_diff, z);
        }
        run.write_json("agreement.json", &agreement)?;

        let primary = routes.iter().find(|r| **r != Route::Mc).or(routes.first()).unwrap();
        let series = &all[primary.as_str()];
        let window = (4, (dim / 4).max(4));
        let mut fits = BTreeMap::new();
        for model in [DecayModel::Power, DecayModel::Exponential] {
            let key = match model {
                DecayModel::Power => "power",
                DecayModel::Exponential => "exponential",
            };
            match fit_decay(series, model, window.0, window.1) {
                Ok(fit) => {
                    println!("{key:<12} slope {:.5}  r2 {:.5}  ({} points)", fit.slope, fit.r_squared, fit.points);
                    fits.insert(key, json!(fit));
                }
                Err(e) => {
                    fits.insert(key, json!({ "error": e.to_string() }));
                }
            }
        }
        run.write_json("fit.json", &json!({ "route": primary, "window": window, "fits": fits }))?;
    }

    if let Some(w) = cfg.witness {
        let wit = slow_witness(&ctx.field, w.r, w.k)?;
        let vals = wit.spectral_series(&ctx.field, n_max)?;
        let mut csv = String::from("n,value,predicted,tail_bound\n");
        let mut worst: f64 = f64::NEG_INFINITY;
        for &n in &lags {
            let v = vals[n].re;
            let tb = wit.tail_bound(n);
            worst = worst.max((v - wit.predicted(n)).abs() - tb);
            let _ = writeln!(csv, "{n},{v},{},{tb}", wit.predicted(n));
        }
        println!("witness r = {} K = {}: worst |value - r^n| - tail_bound = {worst:.3e}", w.r, w.k);
        run.write("witness.csv", csv.as_bytes())?;
        run.check("slow_witness");
    }
    let path = run.finish()?;
    println!("wrote {}", path.display());
    Ok(Outcome::Pass)
}

#[derive(Debug, serde::Serialize)]
pub struct AgreementRow {
    pub pair: String,
    pub max_abs_diff: f64,
    /// Largest `|diff| / stderr` when one side is Monte Carlo.
    pub max_z: Option<f64>,
}

fn agreement_table(all: &BTreeMap<&'static str, CorrelationSeries>) -> Vec<AgreementRow> {
    let keys: Vec<&&str> = all.keys().collect();
    let mut rows = Vec::new();
    for (i, a) in keys.iter().enumerate() {
        for b in &keys[i + 1..] {
            let (sa, sb) = (&all[**a], &all[**b]);
            let mut max_abs: f64 = 0.0;
            let mut max_z: Option<f64> = None;
            for (ea, eb) in sa.entries().iter().zip(sb.entries()) {
                let d = (ea.value - eb.value).abs();
                max_abs = max_abs.max(d);
                if let Some(se) = ea.stderr.or(eb.stderr) {
                    let z = if se > 0.0 { d / se } else if d == 0.0 { 0.0 } else { f64::INFINITY };
                    max_z = Some(max_z.map_or(z, |m: f64| m.max(z)));
                }
            }
            rows.push(AgreementRow { pair: format!("{a}-{b}"), max_abs_diff: max_abs, max_z });
        }
    }
    rows
}

pub fn verify(ctx: &Context) -> anyhow::Result<Outcome> {
    let suites = verify::run_all(ctx)?;
    let mut run = ctx.run_dir("verify")?;
    let mut failed = false;
    for s in &suites {
        run.check(s.name.clone());
        let fails: Vec<_> = s.checks.iter().filter(|c| !c.pass).collect();
        if fails.is_empty() {
            println!("PASS {:<16} {} checks, min margin {:.3e}", s.name, s.checks.len(), s.min_margin());
        } else {
            failed = true;
            println!("FAIL {:<16} {}/{} checks failed", s.name, fails.len(), s.checks.len());
            for c in fails.iter().take(5) {
                println!("     {}: {:.6e} <= {:.6e} violated, margin {:.3e}", c.name, c.lhs, c.rhs, c.rhs - c.lhs);
            }
        }
    }
    run.write_json("verify.json", &suites)?;
    let path = run.finish()?;
    println!("wrote {}", path.display());
    Ok(if failed { Outcome::Fail } else { Outcome::Pass })
}
