//! Versioned JSON experiment configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mixlab::chaos::{PolyObservable, SignedIndex, WickMonomial};
use mixlab::correlate::Route;
use mixlab::tolerances::HOLDER_MIN_SCALE;
use mixlab::{ChaosObservable, Complex64, CovarianceModel, FieldSpec};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub field: FieldSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Monte Carlo draws per lag for the `mc` route.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub holder: HolderSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observables: Option<ObservablePair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<NList>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routes: Option<Vec<Route>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessSettings>,
    /// Multiplies every sigma_k after it is derived from the field.
    #[serde(default = "one")]
    pub sigma_scale: f64,
    #[serde(default)]
    pub verify: VerifySettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_samples() -> usize {
    100_000
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
}

impl HolderSettings {
    /// `(theta_min, theta_max, grid)` with defaults scaled to the truncation.
    pub fn resolve(&self, dim: usize) -> (f64, f64, usize) {
        let tmin = self.theta_min.unwrap_or((2.0 * HOLDER_MIN_SCALE / dim as f64).max(1e-3));
        let tmax = self.theta_max.unwrap_or((10.0 * tmin).max(0.1).min(std::f64::consts::PI));
        (tmin, tmax, self.grid.unwrap_or(32))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablePair {
    pub f: ObservableSpec,
    pub g: ObservableSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObservableSpec {
    /// `Re<v, x>`; missing coordinates are zero.
    Linear { coeffs: Vec<[f64; 2]> },
    /// The signed coordinate `label`.
    Basis { label: i32 },
    NormSq,
    Chaos(ChaosObservable),
    Poly(PolyObservable),
}

/// An observable ready for every route.
#[derive(Debug, Clone)]
pub struct ResolvedObservable {
    pub chaos: ChaosObservable,
    /// Present when the observable is `c + Re<v, .>`.
    pub linear: Option<Vec<Complex64>>,
    pub label: String,
}

impl ObservableSpec {
    pub fn resolve(&self, dim: usize, cov: &CovarianceModel) -> anyhow::Result<ResolvedObservable> {
        let (chaos, label) = match self {
            ObservableSpec::Linear { coeffs } => {
                if coeffs.len() > dim {
                    bail!("linear observable has {} coefficients but dim = {dim}", coeffs.len());
                }
                let mut v = vec![Complex64::default(); dim];
                for (k, c) in coeffs.iter().enumerate() {
                    v[k] = Complex64::new(c[0], c[1]);
                }
                (ChaosObservable::linear(&v), "linear".to_string())
            }
            ObservableSpec::Basis { label } => {
                let idx = SignedIndex::new(*label)?;
                if idx.coord() >= dim {
                    bail!("basis label {label} is outside dim = {dim}");
                }
                (ChaosObservable::linear(&idx.direction(dim)), format!("basis({label})"))
            }
            ObservableSpec::NormSq => (norm_sq_observable(cov), "norm_sq".to_string()),
            ObservableSpec::Chaos(f) => (f.clone(), "chaos".to_string()),
            ObservableSpec::Poly(p) => (p.to_chaos(cov), "poly".to_string()),
        };
        if chaos.max_coord().is_some_and(|c| c >= dim) {
            bail!("observable '{label}' uses a coordinate outside dim = {dim}");
        }
        let linear = (chaos.max_degree() <= 1).then(|| {
            let mut v = vec![Complex64::default(); dim];
            for (m, c) in chaos.terms() {
                let i = m.indices()[0];
                if i.is_imag() {
                    v[i.coord()].im += c;
                } else {
                    v[i.coord()].re += c;
                }
            }
            v
        });
        Ok(ResolvedObservable { chaos, linear, label })
    }
}

/// `||x||^2 = sum_l (:y_l^2: + sigma_l^2)` over both signed coordinates of each `e_k`.
pub fn norm_sq_observable(cov: &CovarianceModel) -> ChaosObservable {
    let mut f = ChaosObservable::constant(2.0 * cov.sigma.iter().map(|s| s * s).sum::<f64>());
    for k in 0..cov.dim() {
        for i in [SignedIndex::re(k), SignedIndex::im(k)] {
            f.add_term(WickMonomial::new(vec![i, i]), 1.0);
        }
    }
    f
}

/// Lags given as `"a:b"`, `"a:b:log"`, `"a:b:<step>"` or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NList {
    Spec(String),
    List(Vec<usize>),
}

impl NList {
    pub fn resolve(&self) -> anyhow::Result<Vec<usize>> {
        let mut out = match self {
            NList::List(v) => v.clone(),
            NList::Spec(s) => parse_n_spec(s)?,
        };
        out.sort_unstable();
        out.dedup();
        if out.is_empty() {
            bail!("lag list is empty");
        }
        Ok(out)
    }
}

/// `log` spacing keeps the distinct integers of `a * 2^{j/4}` and always includes `b`.
pub fn parse_n_spec(s: &str) -> anyhow::Result<Vec<usize>> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        bail!("lag spec '{s}' must look like a:b, a:b:log or a:b:step");
    }
    let a: usize = parts[0].trim().parse().with_context(|| format!("bad lag start in '{s}'"))?;
    let b: usize = parts[1].trim().parse().with_context(|| format!("bad lag end in '{s}'"))?;
    if a > b {
        bail!("lag spec '{s}' has start above end");
    }
    match parts.get(2).map(|p| p.trim()) {
        None | Some("lin") => Ok((a..=b).collect()),
        Some("log") => {
            let start = a.max(1);
            let mut v: Vec<usize> = if a == 0 { vec![0] } else { Vec::new() };
            let mut j = 0;
            loop {
                let n = (start as f64 * 2f64.powf(j as f64 / 4.0)).round() as usize;
                if n > b {
                    break;
                }
                if v.last() != Some(&n) {
                    v.push(n);
                }
                j += 1;
            }
            if v.last() != Some(&b) {
                v.push(b);
            }
            Ok(v)
        }
        Some(step) => {
            let step: usize = step.parse().with_context(|| format!("bad lag step in '{s}'"))?;
            if step == 0 {
                bail!("lag step must be positive");
            }
            Ok((a..=b).step_by(step).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessSettings {
    pub r: f64,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    pub moment_samples: usize,
    pub corr_samples: usize,
    pub bound_pairs: usize,
    pub bound_lags: Vec<usize>,
    pub max_power_lag: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            moment_samples: 200_000,
            corr_samples: 200_000,
            bound_pairs: 20,
            bound_lags: vec![2, 4, 8, 16, 32],
            max_power_lag: 64,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if text.trim().is_empty() {
            bail!("config {} is empty", path.display());
        }
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.version != CONFIG_VERSION {
            bail!("unsupported config version {} (expected {CONFIG_VERSION})", self.version);
        }
        if !(self.sigma_scale.is_finite() && self.sigma_scale > 0.0) {
            bail!("sigma_scale must be positive and finite");
        }
        if self.samples == 0 {
            bail!("samples must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_specs() {
        assert_eq!(parse_n_spec("1:5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_n_spec("0:10:5").unwrap(), vec![0, 5, 10]);
        let log = parse_n_spec("1:64:log").unwrap();
        assert_eq!(log.first(), Some(&1));
        assert_eq!(log.last(), Some(&64));
        assert!(log.windows(2).all(|w| w[0] < w[1]));
        assert!(log.contains(&8) && log.contains(&32));
        assert!(parse_n_spec("5:1").is_err());
        assert!(parse_n_spec("1").is_err());
        assert!(parse_n_spec("1:4:0").is_err());
    }

    #[test]
    fn observable_specs_parse() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"version":1,"field":{"kind":"weighted_shift","kappa":1.0,"dim":16},
                "observables":{"f":{"type":"basis","label":-2},
                               "g":{"type":"chaos","degree0":0.5,"terms":[{"degree":2,"indices":[1,3],"coeff":2.0}]}}}"#,
        )
        .unwrap();
        let cov = CovarianceModel::new(vec![0.5; 16]).unwrap();
        let pair = cfg.observables.unwrap();
        let f = pair.f.resolve(16, &cov).unwrap();
        assert_eq!(f.linear.unwrap()[1], Complex64::new(0.0, 1.0));
        let g = pair.g.resolve(16, &cov).unwrap();
        assert!(g.linear.is_none());
        assert_eq!(g.chaos.degree0, 0.5);
    }

    #[test]
    fn norm_sq_observable_evaluates_to_norm() {
        let cov = CovarianceModel::new(vec![0.7, 0.2, 0.4]).unwrap();
        let f = norm_sq_observable(&cov);
        let z = [Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.0), Complex64::new(-0.3, 0.9)];
        let direct: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        assert!((f.eval(&z, &cov).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(serde_json::from_str::<ExperimentConfig>("{}").is_err());
        let bad: ExperimentConfig =
            serde_json::from_str(r#"{"version":2,"field":{"kind":"kalisch","dim":8}}"#).unwrap();
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(
            r#"{"version":1,"field":{"kind":"kalisch","dim":8},"bogus":1}"#
        )
        .is_err());
    }
}
