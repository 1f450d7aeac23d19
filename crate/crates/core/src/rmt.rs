//! Monte-Carlo checks on concatenated Gaussian head blocks.
//!
//! For `h` independent `N × d` standard-normal blocks the concatenation
//! `A = [A₁, …, A_h]` is `N × D` with `D = h·d`. Once `D > N` its extreme singular
//! values concentrate around `√D ± √N`, so `κ(A) ≈ (√D + √N) / (√D − √N)`, which
//! tends to 1 as heads are added with `d` held fixed.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, numerical_rank, Kappa, Matrix, DEFAULT_RANK_TOL};
use crate::seed::{derive_seed, rng_for};

/// Standard-normal `rows × cols` matrix from a seeded ChaCha8 stream.
pub fn sample_gaussian(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::validation(format!(
            "gaussian sample needs positive dimensions, got {rows}x{cols}"
        )));
    }
    let mut rng = rng_for(seed, &[]);
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Ok(Matrix::from_raw(rows, cols, data))
}

/// `(√D + √N) / (√D − √N)`, defined for `D > N ≥ 1`.
pub fn asymptotic_kappa(n: usize, d_total: usize) -> Result<f64> {
    if n == 0 || d_total <= n {
        return Err(Error::validation(format!(
            "asymptotic kappa needs D > N >= 1, got N={n}, D={d_total}"
        )));
    }
    let (sd, sn) = ((d_total as f64).sqrt(), (n as f64).sqrt());
    Ok((sd + sn) / (sd - sn))
}

fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub seq_len: usize,
    pub head_dim: usize,
    pub head_counts: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
}

impl SweepSpec {
    pub fn new(seq_len: usize, head_dim: usize, head_counts: Vec<usize>, trials: usize, seed: u64) -> Self {
        SweepSpec {
            seq_len,
            head_dim,
            head_counts,
            trials,
            seed,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 {
            return Err(Error::validation("seq_len must be >= 1"));
        }
        if self.head_dim == 0 {
            return Err(Error::validation("head_dim must be >= 1"));
        }
        if self.head_counts.is_empty() {
            return Err(Error::validation("head_counts must not be empty"));
        }
        if self.head_counts[0] == 0 {
            return Err(Error::validation("head counts must be >= 1"));
        }
        if self.head_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("head_counts must be strictly ascending"));
        }
        if self.trials == 0 {
            return Err(Error::validation("trials must be >= 1"));
        }
        if !(self.rank_tol.is_finite() && self.rank_tol > 0.0) {
            return Err(Error::validation("rank_tol must be positive"));
        }
        Ok(())
    }

    /// The concatenated matrix `[A₁, …, A_h]` for one trial; block `i` is drawn
    /// from its own stream keyed by `(seed, h, trial, i)`.
    pub fn trial_matrix(&self, heads: usize, trial: usize) -> Result<Matrix> {
        let trial_seed = derive_seed(self.seed, &[heads as u64, trial as u64]);
        let blocks = (0..heads)
            .map(|i| sample_gaussian(self.seq_len, self.head_dim, derive_seed(trial_seed, &[i as u64])))
            .collect::<Result<Vec<_>>>()?;
        Matrix::hconcat(&blocks)
    }
}

/// Summary of `κ` over the trials at one head count. Statistics cover finite
/// values only; rank-deficient draws are counted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaStats {
    pub h: usize,
    #[serde(rename = "D")]
    pub embed_dim: usize,
    pub trials: usize,
    pub mean_kappa: f64,
    pub std_kappa: f64,
    pub min_kappa: f64,
    pub max_kappa: f64,
    /// `None` where `D <= N` and the closed form is undefined.
    pub asymptotic_kappa: Option<f64>,
    pub rank_deficient_count: usize,
}

impl KappaStats {
    pub fn from_samples(h: usize, embed_dim: usize, seq_len: usize, kappas: &[Kappa]) -> Self {
        let finite: Vec<f64> = kappas.iter().filter_map(|k| k.finite()).collect();
        let rank_deficient_count = kappas.len() - finite.len();
        let (mean, std, min, max) = if finite.is_empty() {
            (f64::INFINITY, f64::NAN, f64::INFINITY, f64::INFINITY)
        } else {
            let n = finite.len() as f64;
            let mean = finite.iter().sum::<f64>() / n;
            let var = if finite.len() > 1 {
                finite.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
            let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean.clamp(min, max), var.sqrt(), min, max)
        };
        KappaStats {
            h,
            embed_dim,
            trials: kappas.len(),
            mean_kappa: mean,
            std_kappa: std,
            min_kappa: min,
            max_kappa: max,
            asymptotic_kappa: asymptotic_kappa(seq_len, embed_dim).ok(),
            rank_deficient_count,
        }
    }
}

/// Per-trial `κ` values at one head count, in trial order.
pub fn trial_kappas(spec: &SweepSpec, heads: usize) -> Result<Vec<Kappa>> {
    (0..spec.trials)
        .into_par_iter()
        .map(|t| condition_number(&spec.trial_matrix(heads, t)?, spec.rank_tol))
        .collect()
}

pub fn head_concat_sweep(spec: &SweepSpec) -> Result<Vec<KappaStats>> {
    spec.validate()?;
    spec.head_counts
        .iter()
        .map(|&h| {
            let kappas = trial_kappas(spec, h)?;
            Ok(KappaStats::from_samples(h, h * spec.head_dim, spec.seq_len, &kappas))
        })
        .collect()
}

/// True when `mean_kappa` never rises by more than `slack` (relative) between
/// adjacent points with `D > N`.
pub fn is_nonincreasing_beyond_square(stats: &[KappaStats], seq_len: usize, slack: f64) -> bool {
    let tail: Vec<f64> = stats
        .iter()
        .filter(|s| s.embed_dim > seq_len)
        .map(|s| s.mean_kappa)
        .collect();
    tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
}

/// Fraction of Gaussian `rows × cols` draws whose numerical rank is `min(rows, cols)`.
pub fn full_rank_probability(rows: usize, cols: usize, trials: usize, seed: u64, rank_tol: f64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::validation("trials must be >= 1"));
    }
    let full = rows.min(cols);
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| {
            let m = sample_gaussian(rows, cols, derive_seed(seed, &[t as u64]))?;
            Ok(usize::from(numerical_rank(&m, rank_tol)? == full))
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / trials as f64)
}
