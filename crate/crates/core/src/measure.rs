//! Sampling the Gaussian invariant measure and estimating its moments.
//!
//! Samples are produced in blocks of [`BLOCK`] draws. Block `b` of stream
//! `stream_id` reads a ChaCha8 generator keyed by `seed`, on ChaCha stream
//! `stream_id`, starting at word offset `b * 2^40`. Normals come from the
//! ziggurat sampler of `rand_distr::StandardNormal`, real part first, then
//! imaginary part, coordinate by coordinate. Because every block owns its
//! generator, results do not depend on the number of worker threads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::CovarianceModel;
use crate::tolerances::{MC_BATCHES, MIN_MOMENT_SAMPLES};
use crate::util::{batch_means, median};

/// Draws per generator block.
pub const BLOCK: usize = 4096;

const BLOCK_WORD_STRIDE: u128 = 1 << 40;

#[derive(Debug, Clone)]
pub struct GaussianSampler {
    pub cov: CovarianceModel,
    pub seed: u64,
    pub stream_id: u64,
}

/// Row-major batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl SampleSet {
    pub fn count(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

impl GaussianSampler {
    pub fn new(cov: CovarianceModel, seed: u64, stream_id: u64) -> Self {
        GaussianSampler { cov, seed, stream_id }
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    /// Generator for block `b` of this stream.
    pub fn block_rng(&self, b: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos(b as u128 * BLOCK_WORD_STRIDE);
        rng
    }

    fn fill_block(&self, b: u64, rows: usize, out: &mut [Complex64]) {
        let mut rng = self.block_rng(b);
        let dim = self.dim();
        for r in 0..rows {
            for (k, s) in self.cov.sigma.iter().enumerate() {
                let xi: f64 = rng.sample(StandardNormal);
                let eta: f64 = rng.sample(StandardNormal);
                out[r * dim + k] = Complex64::new(s * xi, s * eta);
            }
        }
    }

    /// Apply `f` to each block of `count` draws in parallel; results come back in block order.
    pub fn map_blocks<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, &SampleSet) -> T + Sync,
    {
        let blocks = count.div_ceil(BLOCK);
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let rows = BLOCK.min(count - b * BLOCK);
                let mut set = SampleSet { dim: self.dim(), data: vec![Complex64::default(); rows * self.dim()] };
                self.fill_block(b as u64, rows, &mut set.data);
                f(b as u64, &set)
            })
            .collect()
    }

    /// Per-draw statistic `f(x)`, in draw order.
    pub fn map_draws<F>(&self, count: usize, f: F) -> Vec<f64>
    where
        F: Fn(&[Complex64]) -> f64 + Sync,
    {
        self.map_blocks(count, |_, set| set.rows().map(&f).collect::<Vec<_>>())
            .into_iter()
            .flatten()
            .collect()
    }

    pub fn sample(&self, count: usize) -> Result<SampleSet> {
        if count == 0 {
            return invalid("count must be positive");
        }
        let data = self
            .map_blocks(count, |_, set| set.data.clone())
            .into_iter()
            .flatten()
            .collect();
        Ok(SampleSet { dim: self.dim(), data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Median of batch means, reported for `k >= 3`.
    pub median_of_batches: Option<f64>,
}

/// Monte Carlo estimate of `int ||x||^{2k} dm`.
pub fn empirical_moment(samples: &SampleSet, k: u32) -> Result<MomentEstimate> {
    let sq: Vec<f64> = samples.rows().map(|r| r.iter().map(|c| c.norm_sqr()).sum()).collect();
    empirical_moment_from_sq_norms(&sq, k)
}

/// Same as [`empirical_moment`] from precomputed `||x||^2` values.
pub fn empirical_moment_from_sq_norms(sq_norms: &[f64], k: u32) -> Result<MomentEstimate> {
    if k == 0 || k > 6 {
        return invalid(format!("moment order must be in 1..=6, got {k}"));
    }
    if sq_norms.len() < MIN_MOMENT_SAMPLES {
        return invalid(format!(
            "need at least {MIN_MOMENT_SAMPLES} samples, got {}",
            sq_norms.len()
        ));
    }
    let vals: Vec<f64> = sq_norms.iter().map(|s| s.powi(k as i32)).collect();
    let (estimate, stderr, means) = batch_means(&vals, MC_BATCHES);
    Ok(MomentEstimate { estimate, stderr, median_of_batches: (k >= 3).then(|| median(&means)) })
}

/// Streaming moment estimate that never stores the draws.
pub fn moment_mc(sampler: &GaussianSampler, count: usize, k: u32) -> Result<MomentEstimate> {
    let sq = sampler.map_draws(count, |x| x.iter().map(|c| c.norm_sqr()).sum());
    empirical_moment_from_sq_norms(&sq, k)
}

/// Estimate of `<R e_j, e_k> = E[conj(x_j) x_k]` with entrywise standard errors.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub mean: DMatrix<Complex64>,
    pub stderr: DMatrix<f64>,
}

pub fn empirical_covariance(samples: &SampleSet) -> Result<CovarianceEstimate> {
    if samples.count() < MIN_MOMENT_SAMPLES {
        return invalid(format!(
            "need at least {MIN_MOMENT_SAMPLES} samples, got {}",
            samples.count()
        ));
    }
    Ok(raw_covariance(samples))
}

/// Covariance estimate without the sample-size floor.
pub fn raw_covariance(samples: &SampleSet) -> CovarianceEstimate {
    let d = samples.dim;
    let s = samples.count() as f64;
    let mut mean = DMatrix::<Complex64>::zeros(d, d);
    let mut sq_re = DMatrix::<f64>::zeros(d, d);
    let mut sq_im = DMatrix::<f64>::zeros(d, d);
    for row in samples.rows() {
        for j in 0..d {
            let a = row[j].conj();
            for k in 0..d {
                let v = a * row[k];
                mean[(j, k)] += v;
                sq_re[(j, k)] += v.re * v.re;
                sq_im[(j, k)] += v.im * v.im;
            }
        }
    }
    mean /= Complex64::new(s, 0.0);
    let stderr = DMatrix::from_fn(d, d, |j, k| {
        let m = mean[(j, k)];
        let var = (sq_re[(j, k)] / s - m.re * m.re) + (sq_im[(j, k)] / s - m.im * m.im);
        (var.max(0.0) / s).sqrt()
    });
    CovarianceEstimate { mean, stderr }
}

/// Write samples as little-endian `u64` header `dim, count, seed`
/// followed by interleaved `f64` real and imaginary parts.
pub fn write_samples(path: &Path, samples: &SampleSet, seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for h in [samples.dim as u64, samples.count() as u64, seed] {
        w.write_all(&h.to_le_bytes())?;
    }
    for c in &samples.data {
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<(SampleSet, u64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    let mut header = [0u64; 3];
    for h in header.iter_mut() {
        r.read_exact(&mut word)?;
        *h = u64::from_le_bytes(word);
    }
    let [dim, count, seed] = header;
    let n = (dim * count) as usize;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut word)?;
        let re = f64::from_le_bytes(word);
        r.read_exact(&mut word)?;
        data.push(Complex64::new(re, f64::from_le_bytes(word)));
    }
    Ok((SampleSet { dim: dim as usize, data }, seed))
}
