//! Numerical thresholds shared by the engines.

/// Slack on `|lambda| = 1` accepted by field evaluation.
pub const UNIMODULAR_TOL: f64 = 1e-12;

/// Values at or below this magnitude are ignored by decay fits.
pub const FIT_FLOOR: f64 = 1e-14;

/// Minimum number of usable points for a decay fit.
pub const FIT_MIN_POINTS: usize = 6;

/// Safety factor applied to a fitted Hoelder constant before it is used in a bound.
pub const HOLDER_INFLATION: f64 = 2.0;

/// Smallest allowed `theta_min * dim` for monomial fields in a Hoelder fit.
pub const HOLDER_MIN_SCALE: f64 = 10.0;

/// Number of batches used for batch-means standard errors.
pub const MC_BATCHES: usize = 100;

/// Minimum sample count for moment and covariance estimates.
pub const MIN_MOMENT_SAMPLES: usize = 10_000;

/// Minimum sample count for Monte Carlo correlations.
pub const MIN_CORR_SAMPLES: usize = 1_000;

/// Highest Hermite degree supported.
pub const HERMITE_MAX: usize = 64;

/// Highest permanent size supported.
pub const PERMANENT_MAX: usize = 20;

/// Largest size for which the permanent is expanded over all permutations.
pub const PERMANENT_NAIVE_MAX: usize = 6;

/// Random starts for the multilinear power iteration.
pub const POWER_STARTS: usize = 8;

/// Iterations per start of the multilinear power iteration.
pub const POWER_ITERS: usize = 200;
