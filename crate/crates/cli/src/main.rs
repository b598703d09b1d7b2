//! `mixlab`: run field, correlation and verification experiments from a JSON config.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 invalid config or usage.

mod commands;
mod config;
mod run;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::{Args, Parser, Subcommand};

use commands::{Context, Outcome};
use config::{ExperimentConfig, NList};
use mixlab::correlate::Route;

#[derive(Parser)]
#[command(name = "mixlab", version, about = "Correlation decay experiments for Gaussian linear dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Field norm, Hoelder fit, gap table and eigen residual.
    FieldInfo(Common),
    /// Correlation series per route with an agreement summary.
    Correlate(Common),
    /// Run every invariant suite; exit 1 if any check fails.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root, used when the config has no `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated routes, used when the config has none.
    #[arg(long, value_delimiter = ',')]
    routes: Option<Vec<String>>,
    /// Lags such as `1:64:log`, used when the config has none.
    #[arg(long)]
    n: Option<String>,
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("MIXLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().with_context(|| format!("MIXLAB_THREADS='{v}' is not a count"))?;
    if n == 0 {
        bail!("MIXLAB_THREADS must be positive");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn prepare(c: Common) -> anyhow::Result<Context> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    let seed = c.seed.or(cfg.seed).unwrap_or(0);
    cfg.seed = Some(seed);
    if cfg.routes.is_none() {
        if let Some(r) = c.routes {
            cfg.routes = Some(r.iter().map(|s| s.parse::<Route>()).collect::<Result<_, _>>()?);
        }
    }
    if cfg.n.is_none() {
        cfg.n = c.n.map(NList::Spec);
    }
    if let Some(n) = &cfg.n {
        n.resolve()?;
    }
    let out = cfg.out.take().or(c.out).unwrap_or_else(|| PathBuf::from("runs"));
    Context::new(cfg, seed, out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| match cli.command {
        Command::FieldInfo(c) => prepare(c).and_then(|ctx| commands::field_info(&ctx)),
        Command::Correlate(c) => prepare(c).and_then(|ctx| commands::correlate(&ctx)),
        Command::Verify(c) => prepare(c).and_then(|ctx| commands::verify(&ctx)),
    });
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
